#include "dprqkd/netlink.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "dprqkd/rng.hpp"

namespace dprqkd::netlink {

namespace {

void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}
void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back((x >> (8 * i)) & 0xff);
}
void put_u64(std::vector<uint8_t>& v, uint64_t x) {
  for (int i = 0; i < 8; ++i) v.push_back((x >> (8 * i)) & 0xff);
}
uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | p[i];
  return x;
}

bool known_type(uint8_t t) {
  switch (static_cast<MsgType>(t)) {
    case MsgType::Hello:
    case MsgType::ClickAnnounce:
    case MsgType::SiftAck:
    case MsgType::QberSample:
    case MsgType::Done:
    case MsgType::Abort:
      return true;
  }
  return false;
}

}  // namespace

std::vector<uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload)
    throw std::runtime_error("netlink: frame exceeds 16 MiB cap");
  std::vector<uint8_t> out;
  out.reserve(kHeaderSize + frame.payload.size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(static_cast<uint8_t>(frame.msg_type));
  put_u32(out, static_cast<uint32_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

std::optional<Frame> decode_frame(const uint8_t* data, size_t size,
                                  size_t* consumed) {
  if (size < kHeaderSize) return std::nullopt;
  if (data[0] != kMagic0 || data[1] != kMagic1)
    throw std::runtime_error("netlink: bad magic");
  if (data[2] != kVersion) throw std::runtime_error("netlink: bad version");
  if (!known_type(data[3])) throw std::runtime_error("netlink: unknown msg_type");
  const uint32_t len = get_u32(data + 4);
  if (len > kMaxPayload) throw std::runtime_error("netlink: frame exceeds cap");
  if (size < kHeaderSize + len) return std::nullopt;
  Frame f;
  f.msg_type = static_cast<MsgType>(data[3]);
  f.payload.assign(data + kHeaderSize, data + kHeaderSize + len);
  if (consumed) *consumed = kHeaderSize + len;
  return f;
}

// ---------------------------------------------------------------- TcpStream

TcpStream::TcpStream(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpStream::set_timeout_s(double seconds) {
  timeval tv{};
  tv.tv_sec = static_cast<long>(seconds);
  tv.tv_usec = static_cast<long>((seconds - tv.tv_sec) * 1e6);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

bool TcpStream::read_exact(void* buf, size_t n) {
  auto* p = static_cast<uint8_t*>(buf);
  while (n > 0) {
    const ssize_t r = ::recv(fd_, p, n, 0);
    if (r <= 0) return false;
    p += r;
    n -= static_cast<size_t>(r);
  }
  return true;
}

bool TcpStream::write_all(const void* buf, size_t n) {
  const auto* p = static_cast<const uint8_t*>(buf);
  while (n > 0) {
    const ssize_t w = ::send(fd_, p, n, MSG_NOSIGNAL);
    if (w <= 0) return false;
    p += w;
    n -= static_cast<size_t>(w);
  }
  return true;
}

void TcpStream::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<TcpStream> tcp_listen_accept(const std::string& host, int port,
                                             double timeout_s) {
  const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (lfd < 0) throw std::runtime_error("netlink: socket() failed");
  int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(lfd);
    throw std::runtime_error("netlink: bad listen address " + host);
  }
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(lfd);
    throw std::runtime_error("netlink: bind failed on " + host + ":" +
                             std::to_string(port));
  }
  if (::listen(lfd, 1) != 0) {
    ::close(lfd);
    throw std::runtime_error("netlink: listen failed");
  }
  timeval tv{};
  tv.tv_sec = static_cast<long>(timeout_s);
  tv.tv_usec = static_cast<long>((timeout_s - tv.tv_sec) * 1e6);
  ::setsockopt(lfd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  const int cfd = ::accept(lfd, nullptr, nullptr);
  ::close(lfd);
  if (cfd < 0) throw std::runtime_error("netlink: accept timed out");
  auto stream = std::make_unique<TcpStream>(cfd);
  stream->set_timeout_s(timeout_s);
  return stream;
}

std::unique_ptr<TcpStream> tcp_connect(const std::string& host, int port,
                                       double timeout_s) {
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("netlink: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      throw std::runtime_error("netlink: bad address " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      auto stream = std::make_unique<TcpStream>(fd);
      stream->set_timeout_s(timeout_s);
      return stream;
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      throw std::runtime_error("netlink: connect timed out");
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

// --------------------------------------------------------------- PipeStream

struct PipePair {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<uint8_t> a_to_b;
  std::deque<uint8_t> b_to_a;
  bool closed = false;
};

PipeStream::PipeStream(std::shared_ptr<PipePair> shared, bool a_side)
    : shared_(std::move(shared)), a_side_(a_side) {}

bool PipeStream::read_exact(void* buf, size_t n) {
  auto* p = static_cast<uint8_t*>(buf);
  std::unique_lock<std::mutex> lock(shared_->mu);
  auto& q = a_side_ ? shared_->b_to_a : shared_->a_to_b;
  while (n > 0) {
    if (!shared_->cv.wait_for(lock, std::chrono::seconds(30),
                              [&] { return !q.empty() || shared_->closed; }))
      return false;
    if (q.empty() && shared_->closed) return false;
    while (n > 0 && !q.empty()) {
      *p++ = q.front();
      q.pop_front();
      --n;
    }
  }
  return true;
}

bool PipeStream::write_all(const void* buf, size_t n) {
  const auto* p = static_cast<const uint8_t*>(buf);
  std::lock_guard<std::mutex> lock(shared_->mu);
  if (shared_->closed) return false;
  auto& q = a_side_ ? shared_->a_to_b : shared_->b_to_a;
  q.insert(q.end(), p, p + n);
  shared_->cv.notify_all();
  return true;
}

void PipeStream::shutdown() {
  std::lock_guard<std::mutex> lock(shared_->mu);
  shared_->closed = true;
  shared_->cv.notify_all();
}

std::pair<std::unique_ptr<PipeStream>, std::unique_ptr<PipeStream>> make_pipe() {
  auto shared = std::make_shared<PipePair>();
  return {std::make_unique<PipeStream>(shared, true),
          std::make_unique<PipeStream>(shared, false)};
}

// ------------------------------------------------------------ session logic

namespace {

bool send_frame(ByteStream& s, MsgType type, std::vector<uint8_t> payload = {}) {
  Frame f{type, std::move(payload)};
  const auto bytes = encode_frame(f);
  return s.write_all(bytes.data(), bytes.size());
}

// Returns nullopt on stream error or malformed frame.
std::optional<Frame> recv_frame(ByteStream& s) {
  uint8_t header[kHeaderSize];
  if (!s.read_exact(header, sizeof(header))) return std::nullopt;
  if (header[0] != kMagic0 || header[1] != kMagic1 || header[2] != kVersion ||
      !known_type(header[3]))
    return std::nullopt;
  const uint32_t len = get_u32(header + 4);
  if (len > kMaxPayload) return std::nullopt;
  Frame f;
  f.msg_type = static_cast<MsgType>(header[3]);
  f.payload.resize(len);
  if (len > 0 && !s.read_exact(f.payload.data(), len)) return std::nullopt;
  return f;
}

Detector detector_from_port(uint8_t port) {
  switch (port) {
    case 0: return Detector::Port0;
    case 1: return Detector::PortPi;
    case 2: return Detector::DataLine;
    case 3: return Detector::MonitorPort0;
    default: return Detector::MonitorPortPi;
  }
}

uint8_t port_from_detector(Detector d) { return static_cast<uint8_t>(d); }

SessionResult abort_session(ByteStream& stream, SessionResult res,
                            AbortReason reason, const std::string& why,
                            bool notify_peer) {
  if (notify_peer)
    send_frame(stream, MsgType::Abort, {static_cast<uint8_t>(reason)});
  res.phase = SessionPhase::Aborted;
  res.abort_reason = why;
  res.final_key = SiftedKey{};
  res.log.push_back("event=abort reason=" + why);
  return res;
}

std::vector<size_t> sample_indices(size_t key_len, double fraction,
                                   uint64_t seed) {
  const size_t want = static_cast<size_t>(std::floor(key_len * fraction));
  std::vector<size_t> idx(key_len);
  for (size_t i = 0; i < key_len; ++i) idx[i] = i;
  Rng rng(derive_stream(seed, 0x53414d50ULL));
  // Partial Fisher-Yates: the first `want` entries become the sample.
  for (size_t i = 0; i < want && i + 1 < key_len; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(key_len - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SiftedKey strip_indices(const SiftedKey& key, const std::vector<size_t>& sorted) {
  SiftedKey out;
  size_t s = 0;
  for (size_t i = 0; i < key.size(); ++i) {
    if (s < sorted.size() && sorted[s] == i) {
      ++s;
      continue;
    }
    out.push(key.bits[i], key.source_slot[i],
             static_cast<BitDomain>(key.domain_tag[i]));
  }
  return out;
}

std::vector<uint8_t> pack_bits_lsb(const std::vector<uint8_t>& bits) {
  std::vector<uint8_t> out((bits.size() + 7) / 8, 0);
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  return out;
}

uint8_t unpack_bit_lsb(const std::vector<uint8_t>& bytes, size_t i) {
  return (bytes[i / 8] >> (i % 8)) & 1;
}

}  // namespace

SessionResult alice_session(ByteStream& stream, const PulseTrain& prep,
                            const Config& cfg, const SessionOptions& opts) {
  SessionResult res;
  res.log.push_back("event=start role=alice protocol=" +
                    std::string(protocol_name(cfg.protocol)));
  const uint64_t digest = params_digest(cfg);
  SiftContext ctx(cfg.protocol, prep, cfg.params);

  // HELLO handshake: we offer, the peer confirms or aborts.
  {
    std::vector<uint8_t> payload;
    payload.push_back(static_cast<uint8_t>(cfg.protocol));
    put_u64(payload, digest);
    if (!send_frame(stream, MsgType::Hello, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "hello send failed", false);
    auto reply = recv_frame(stream);
    if (!reply)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "hello reply missing", true);
    if (reply->msg_type == MsgType::Abort)
      return abort_session(stream, std::move(res), AbortReason::DigestMismatch,
                           "peer aborted handshake", false);
    if (reply->msg_type != MsgType::Hello || reply->payload.size() != 9)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "bad hello reply", true);
    if (reply->payload[0] != static_cast<uint8_t>(cfg.protocol) ||
        get_u64(reply->payload.data() + 1) != digest)
      return abort_session(stream, std::move(res), AbortReason::DigestMismatch,
                           "params digest mismatch", true);
  }
  res.log.push_back("event=hello digest=" + std::to_string(digest));

  // Click announcements until the terminator block.
  SiftedKey key;
  uint64_t announced = 0, retained = 0;
  for (;;) {
    auto frame = recv_frame(stream);
    if (!frame)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "stream ended mid-exchange", true);
    if (frame->msg_type == MsgType::Abort)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "peer aborted", false);
    if (frame->msg_type != MsgType::ClickAnnounce)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "expected click announce", true);
    if (frame->payload.size() < 6)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "short announce", true);
    const uint32_t block_id = get_u32(frame->payload.data());
    const uint16_t count = get_u16(frame->payload.data() + 4);
    if (block_id == 0xffffffffu && count == 0) break;
    if (frame->payload.size() != 6 + static_cast<size_t>(count) * 9)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "announce length mismatch", true);

    std::vector<uint8_t> bitmap((count + 7) / 8, 0);
    const uint8_t* p = frame->payload.data() + 6;
    uint8_t abits[2];
    BitDomain adoms[2];
    for (uint16_t i = 0; i < count; ++i, p += 9) {
      const uint64_t slot = get_u64(p);
      const Detector det = detector_from_port(p[8]);
      const int n = ctx.alice_bits(slot, det, abits, adoms);
      if (n == 0) continue;
      bitmap[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
      for (int b = 0; b < n; ++b) key.push(abits[b], slot, adoms[b]);
      ++retained;
    }
    announced += count;
    if (!send_frame(stream, MsgType::SiftAck, std::move(bitmap)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "ack send failed", false);
  }
  res.n_sifted = key.size();
  res.log.push_back("event=exchange announced=" + std::to_string(announced) +
                    " retained=" + std::to_string(retained) +
                    " sifted_bits=" + std::to_string(key.size()));

  // Disclosed-sample QBER estimate.
  const auto sample = sample_indices(key.size(), opts.sample_fraction,
                                     opts.sample_seed);
  {
    std::vector<uint8_t> payload;
    put_u32(payload, static_cast<uint32_t>(sample.size()));
    std::vector<uint8_t> bits;
    bits.reserve(sample.size());
    for (size_t i : sample) {
      put_u32(payload, static_cast<uint32_t>(i));
      bits.push_back(key.bits[i]);
    }
    const auto packed = pack_bits_lsb(bits);
    payload.insert(payload.end(), packed.begin(), packed.end());
    if (!send_frame(stream, MsgType::QberSample, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "sample send failed", false);
    auto reply = recv_frame(stream);
    if (!reply || reply->msg_type != MsgType::QberSample ||
        reply->payload.size() < 4)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "bad sample reply", true);
    const uint32_t count = get_u32(reply->payload.data());
    const size_t bytes = (count + 7) / 8;
    if (count != sample.size() ||
        reply->payload.size() != 4 + 4 * static_cast<size_t>(count) + bytes)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "sample reply mismatch", true);
    const std::vector<uint8_t> peer_bits(reply->payload.end() - bytes,
                                         reply->payload.end());
    uint64_t mismatches = 0;
    for (size_t i = 0; i < sample.size(); ++i)
      mismatches += key.bits[sample[i]] != unpack_bit_lsb(peer_bits, i);
    res.sampled_bits = sample.size();
    res.sampled_qber =
        sample.empty() ? 0.0 : static_cast<double>(mismatches) / sample.size();
  }
  res.log.push_back("event=estimate sampled=" + std::to_string(res.sampled_bits) +
                    " qber=" + std::to_string(res.sampled_qber));

  res.final_key = strip_indices(key, sample);
  {
    std::vector<uint8_t> payload;
    put_u64(payload, res.n_sifted);
    put_u32(payload, static_cast<uint32_t>(std::llround(res.sampled_qber * 1e6)));
    if (!send_frame(stream, MsgType::Done, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "done send failed", false);
    auto reply = recv_frame(stream);
    if (!reply || reply->msg_type != MsgType::Done)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "missing done", true);
  }
  res.phase = SessionPhase::Done;
  res.log.push_back("event=done final_bits=" + std::to_string(res.final_key.size()));
  return res;
}

SessionResult bob_session(ByteStream& stream,
                          const std::vector<ClickRecord>& clicks,
                          double slot_period_s, const Config& cfg,
                          const SessionOptions& opts) {
  SessionResult res;
  res.log.push_back("event=start role=bob protocol=" +
                    std::string(protocol_name(cfg.protocol)));
  const uint64_t digest = params_digest(cfg);
  const int bpc =
      cfg.protocol == ProtocolId::Dpts ? cfg.params.dpts_bits_per_click : 1;

  {
    auto hello = recv_frame(stream);
    if (!hello || hello->msg_type != MsgType::Hello || hello->payload.size() != 9)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "bad hello", true);
    if (hello->payload[0] != static_cast<uint8_t>(cfg.protocol) ||
        get_u64(hello->payload.data() + 1) != digest)
      return abort_session(stream, std::move(res), AbortReason::DigestMismatch,
                           "params digest mismatch", true);
    std::vector<uint8_t> payload;
    payload.push_back(static_cast<uint8_t>(cfg.protocol));
    put_u64(payload, digest);
    if (!send_frame(stream, MsgType::Hello, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "hello send failed", false);
  }
  res.log.push_back("event=hello digest=" + std::to_string(digest));

  // Announce clicks in slot order; key bits only exist for retained ones.
  std::vector<std::pair<uint64_t, Detector>> tagged;
  tagged.reserve(clicks.size());
  for (const auto& c : clicks)
    tagged.emplace_back(
        static_cast<uint64_t>(std::llround(c.time_s / slot_period_s)), c.detector);
  std::sort(tagged.begin(), tagged.end());

  SiftedKey key;
  uint8_t bbits[2];
  BitDomain bdoms[2];
  uint32_t block_id = 0;
  for (size_t off = 0; off < tagged.size();) {
    const size_t count =
        std::min(opts.max_clicks_per_frame, tagged.size() - off);
    std::vector<uint8_t> payload;
    put_u32(payload, block_id++);
    put_u16(payload, static_cast<uint16_t>(count));
    for (size_t i = 0; i < count; ++i) {
      put_u64(payload, tagged[off + i].first);
      payload.push_back(port_from_detector(tagged[off + i].second));
    }
    if (!send_frame(stream, MsgType::ClickAnnounce, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "announce send failed", false);
    auto ack = recv_frame(stream);
    if (!ack)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "stream ended mid-exchange", true);
    if (ack->msg_type == MsgType::Abort)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "peer aborted", false);
    if (ack->msg_type != MsgType::SiftAck ||
        ack->payload.size() != (count + 7) / 8)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "bad sift ack", true);
    for (size_t i = 0; i < count; ++i) {
      if (!((ack->payload[i / 8] >> (i % 8)) & 1)) continue;
      const auto& [slot, det] = tagged[off + i];
      const int n = bob_bits_for_click(cfg.protocol, bpc, slot, det, bbits, bdoms);
      for (int b = 0; b < n; ++b) key.push(bbits[b], slot, bdoms[b]);
    }
    off += count;
  }
  if (!send_frame(stream, MsgType::ClickAnnounce, [] {
        std::vector<uint8_t> p;
        put_u32(p, 0xffffffffu);
        put_u16(p, 0);
        return p;
      }()))
    return abort_session(stream, std::move(res), AbortReason::Timeout,
                         "terminator send failed", false);
  res.n_sifted = key.size();
  res.log.push_back("event=exchange announced=" + std::to_string(tagged.size()) +
                    " sifted_bits=" + std::to_string(key.size()));

  // Sample exchange: reply with our bits at the disclosed indices.
  std::vector<size_t> sample;
  {
    auto frame = recv_frame(stream);
    if (!frame || frame->msg_type != MsgType::QberSample ||
        frame->payload.size() < 4)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "bad sample frame", true);
    const uint32_t count = get_u32(frame->payload.data());
    const size_t bytes = (count + 7) / 8;
    if (frame->payload.size() != 4 + 4 * static_cast<size_t>(count) + bytes)
      return abort_session(stream, std::move(res), AbortReason::MalformedFrame,
                           "sample length mismatch", true);
    sample.reserve(count);
    const uint8_t* p = frame->payload.data() + 4;
    for (uint32_t i = 0; i < count; ++i, p += 4) {
      const uint32_t idx = get_u32(p);
      if (idx >= key.size())
        return abort_session(stream, std::move(res),
                             AbortReason::ProtocolViolation,
                             "sample index out of range", true);
      sample.push_back(idx);
    }
    const std::vector<uint8_t> peer_bits(frame->payload.end() - bytes,
                                         frame->payload.end());
    uint64_t mismatches = 0;
    std::vector<uint8_t> mine;
    mine.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
      mine.push_back(key.bits[sample[i]]);
      mismatches += key.bits[sample[i]] != unpack_bit_lsb(peer_bits, i);
    }
    res.sampled_bits = count;
    res.sampled_qber = count ? static_cast<double>(mismatches) / count : 0.0;

    std::vector<uint8_t> payload;
    put_u32(payload, count);
    for (uint32_t i = 0; i < count; ++i)
      put_u32(payload, static_cast<uint32_t>(sample[i]));
    const auto packed = pack_bits_lsb(mine);
    payload.insert(payload.end(), packed.begin(), packed.end());
    if (!send_frame(stream, MsgType::QberSample, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "sample send failed", false);
  }
  res.log.push_back("event=estimate sampled=" + std::to_string(res.sampled_bits) +
                    " qber=" + std::to_string(res.sampled_qber));

  res.final_key = strip_indices(key, sample);
  {
    auto done = recv_frame(stream);
    if (!done || done->msg_type != MsgType::Done)
      return abort_session(stream, std::move(res), AbortReason::ProtocolViolation,
                           "missing done", true);
    std::vector<uint8_t> payload;
    put_u64(payload, res.n_sifted);
    put_u32(payload, static_cast<uint32_t>(std::llround(res.sampled_qber * 1e6)));
    if (!send_frame(stream, MsgType::Done, std::move(payload)))
      return abort_session(stream, std::move(res), AbortReason::Timeout,
                           "done send failed", false);
  }
  res.phase = SessionPhase::Done;
  res.log.push_back("event=done final_bits=" + std::to_string(res.final_key.size()));
  return res;
}

}  // namespace dprqkd::netlink
