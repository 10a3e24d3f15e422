#pragma once

// CSV ingestion into the integer attribute domain [0, v_max], plus seeded
// synthetic datasets and user partitioning.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ppodc/transforms.hpp"

namespace ppodc::ingest {

using transforms::PlainRecord;

struct IngestResult {
  std::vector<PlainRecord> records;
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;  // rows with a missing cell
  bool had_header = false;
};

// Empty cells, "?", "NA" and "NaN" count as missing; the whole row is dropped.
// A first row without any numeric cell is taken as a header. Each column is
// min-max normalised and scaled to [0, v_max], rounding half to even; a
// zero-range column maps to 0. Throws IngestError naming row and column for a
// non-numeric cell in a kept row or a ragged row.
IngestResult ingest_csv(std::istream& in, std::int64_t v_max = transforms::kDefaultVMax);
IngestResult ingest_file(const std::filesystem::path& path,
                         std::int64_t v_max = transforms::kDefaultVMax);

// Normalisation of one column of reals.
std::vector<std::int64_t> scale_column(const std::vector<double>& column, std::int64_t v_max);

// m records in [0, v_max]^l drawn around a few seeded centres.
std::vector<PlainRecord> synthetic(std::size_t m, std::size_t l, std::int64_t v_max,
                                   std::uint64_t seed, std::size_t groups = 3);

// Contiguous, near-equal blocks; user j gets the j-th block.
std::vector<std::vector<PlainRecord>> partition(const std::vector<PlainRecord>& records,
                                                std::size_t n_users);

std::vector<PlainRecord> concat(const std::vector<std::vector<PlainRecord>>& users);

void write_records_csv(const std::vector<PlainRecord>& records, const std::filesystem::path& path);

}  // namespace ppodc::ingest
