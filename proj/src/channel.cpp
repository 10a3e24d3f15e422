#include <condition_variable>
#include <deque>
#include <mutex>

#include "ppodc/errors.hpp"
#include "ppodc/transport.hpp"

namespace ppodc::transport {

void Channel::count_sent(std::size_t bytes) {
  if (counters_ == nullptr) return;
  counters_->messages_sent.fetch_add(1, std::memory_order_relaxed);
  counters_->bytes_sent.fetch_add(bytes, std::memory_order_relaxed);
}

void Channel::count_received(std::size_t bytes) {
  if (counters_ == nullptr) return;
  counters_->messages_received.fetch_add(1, std::memory_order_relaxed);
  counters_->bytes_received.fetch_add(bytes, std::memory_order_relaxed);
}

namespace {

// One direction of an in-process pipe.
struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> queue;
  bool closed = false;

  void push(std::vector<std::uint8_t> bytes) {
    {
      std::lock_guard lock(mu);
      if (closed) throw ProtocolAbort("channel closed");
      queue.push_back(std::move(bytes));
    }
    cv.notify_one();
  }

  std::vector<std::uint8_t> pop() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return !queue.empty() || closed; });
    if (queue.empty()) throw ProtocolAbort("channel closed by peer");
    auto bytes = std::move(queue.front());
    queue.pop_front();
    return bytes;
  }

  void close() {
    {
      std::lock_guard lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class InProcChannel final : public Channel {
 public:
  InProcChannel(std::shared_ptr<Pipe> out, std::shared_ptr<Pipe> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~InProcChannel() override { close(); }

  void send(const Frame& f) override {
    auto bytes = encode_frame(f);
    // Counted before delivery so a reply never overtakes the count.
    count_sent(bytes.size());
    out_->push(std::move(bytes));
  }

  Frame recv() override {
    auto bytes = in_->pop();
    count_received(bytes.size());
    return decode_frame(bytes);
  }

  void close() override {
    out_->close();
    in_->close();
  }

 private:
  std::shared_ptr<Pipe> out_;
  std::shared_ptr<Pipe> in_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inproc_pair() {
  auto a_to_b = std::make_shared<Pipe>();
  auto b_to_a = std::make_shared<Pipe>();
  return {std::make_unique<InProcChannel>(a_to_b, b_to_a),
          std::make_unique<InProcChannel>(b_to_a, a_to_b)};
}

}  // namespace ppodc::transport
