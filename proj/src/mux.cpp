#include "ppodc/errors.hpp"
#include "ppodc/transport.hpp"

namespace ppodc::transport {

void Stream::send(MessageType type, std::vector<std::uint8_t> payload) {
  Frame f;
  f.type = type;
  f.session_id = id_;
  f.payload = std::move(payload);
  mux_->channel_->send(f);
}

Frame Stream::recv() { return mux_->pop(id_); }

Frame Stream::recv_expect(MessageType type) {
  Frame f = recv();
  if (f.type == MessageType::kControl && type != MessageType::kControl) {
    PayloadReader r(f.payload);
    if (r.get_u64() == static_cast<std::uint64_t>(ControlOp::kError))
      throw IntegrityError("peer reported: " + r.get_string());
  }
  if (f.type != type)
    throw IntegrityError(std::string("expected ") + to_string(type) + ", got " + to_string(f.type));
  return f;
}

Mux::Mux(std::unique_ptr<Channel> channel) : channel_(std::move(channel)) {
  reader_ = std::thread([this] { reader_loop(); });
}

Mux::~Mux() { close(); }

void Mux::close() {
  channel_->close();
  if (reader_.joinable()) reader_.join();
}

void Mux::reader_loop() {
  for (;;) {
    Frame f;
    try {
      f = channel_->recv();
    } catch (const Error&) {
      break;
    }
    push_frame(std::move(f));
  }
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

void Mux::push_frame(Frame f) {
  {
    std::lock_guard lock(mu_);
    auto [it, inserted] = queues_.try_emplace(f.session_id);
    if (inserted) pending_accept_.push_back(f.session_id);
    it->second.frames.push_back(std::move(f));
  }
  cv_.notify_all();
}

Stream Mux::open_stream(std::uint32_t session_id) {
  std::lock_guard lock(mu_);
  queues_.try_emplace(session_id);
  return Stream(this, session_id);
}

std::optional<Stream> Mux::accept() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !pending_accept_.empty() || closed_; });
  if (pending_accept_.empty()) return std::nullopt;
  auto id = pending_accept_.front();
  pending_accept_.pop_front();
  return Stream(this, id);
}

Frame Mux::pop(std::uint32_t id) {
  std::unique_lock lock(mu_);
  auto& q = queues_[id];
  cv_.wait(lock, [&] { return !q.frames.empty() || closed_; });
  if (q.frames.empty()) throw ProtocolAbort("channel closed");
  Frame f = std::move(q.frames.front());
  q.frames.pop_front();
  return f;
}

Mux::Queue& Mux::queue_for(std::uint32_t id) { return queues_[id]; }

}  // namespace ppodc::transport
