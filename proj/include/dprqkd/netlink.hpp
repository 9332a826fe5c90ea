#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dprqkd/model.hpp"
#include "dprqkd/receiver.hpp"
#include "dprqkd/sifting.hpp"

namespace dprqkd::netlink {

// Wire format: 0x51 0x54 | version 0x01 | msg_type | payload_len u32 LE |
// payload. All integers little-endian; bitmaps are LSB-first within a byte.
inline constexpr uint8_t kMagic0 = 0x51;
inline constexpr uint8_t kMagic1 = 0x54;
inline constexpr uint8_t kVersion = 1;
inline constexpr uint32_t kMaxPayload = 16u * 1024u * 1024u;
inline constexpr size_t kHeaderSize = 8;

enum class MsgType : uint8_t {
  Hello = 0x01,        // protocol id u8, params digest u64
  ClickAnnounce = 0x02,// block id u32, count u16, count x (slot u64, port u8)
  SiftAck = 0x03,      // retained-click bitmap, padded to bytes
  QberSample = 0x04,   // count u32, count x index u32, packed bits
  Done = 0x05,         // n_sifted u64, qber x 1e6 u32
  Abort = 0xFF,        // reason u8
};

enum class AbortReason : uint8_t {
  DigestMismatch = 1,
  MalformedFrame = 2,
  Timeout = 3,
  ProtocolViolation = 4,
};

struct Frame {
  MsgType msg_type = MsgType::Hello;
  std::vector<uint8_t> payload;
};

std::vector<uint8_t> encode_frame(const Frame& frame);
// Throws std::runtime_error on bad magic/version/length; returns nullopt when
// more bytes are needed. `consumed` reports how many bytes a full frame took.
std::optional<Frame> decode_frame(const uint8_t* data, size_t size,
                                  size_t* consumed);

// Blocking byte stream with a read deadline. Implementations: TCP socket and
// an in-process pipe for tests.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual bool read_exact(void* buf, size_t n) = 0;
  virtual bool write_all(const void* buf, size_t n) = 0;
  virtual void shutdown() = 0;
};

class TcpStream : public ByteStream {
 public:
  explicit TcpStream(int fd);
  ~TcpStream() override;
  bool read_exact(void* buf, size_t n) override;
  bool write_all(const void* buf, size_t n) override;
  void shutdown() override;
  void set_timeout_s(double seconds);

 private:
  int fd_;
};

// Listens, accepts exactly one connection, then closes the listener.
std::unique_ptr<TcpStream> tcp_listen_accept(const std::string& host, int port,
                                             double timeout_s);
std::unique_ptr<TcpStream> tcp_connect(const std::string& host, int port,
                                       double timeout_s);

// Paired in-memory streams for loopback tests.
struct PipePair;
class PipeStream : public ByteStream {
 public:
  PipeStream(std::shared_ptr<PipePair> shared, bool a_side);
  bool read_exact(void* buf, size_t n) override;
  bool write_all(const void* buf, size_t n) override;
  void shutdown() override;

 private:
  std::shared_ptr<PipePair> shared_;
  bool a_side_;
};
std::pair<std::unique_ptr<PipeStream>, std::unique_ptr<PipeStream>> make_pipe();

enum class SessionPhase { Hello, Exchanging, Estimating, Done, Aborted };

struct SessionOptions {
  double sample_fraction = 0.1;
  uint64_t sample_seed = 1;
  double timeout_s = 30.0;
  size_t max_clicks_per_frame = 4096;
};

struct SessionResult {
  SessionPhase phase = SessionPhase::Aborted;
  SiftedKey final_key;        // sampled bits already removed
  uint64_t n_sifted = 0;      // before sample removal
  double sampled_qber = 0.0;
  uint64_t sampled_bits = 0;
  std::vector<std::string> log;
  std::string abort_reason;

  bool done() const { return phase == SessionPhase::Done; }
};

// Alice owns the preparation record, answers click announcements with
// retention bitmaps (disclosing block/decoy structure implicitly) and runs
// the sample comparison. Bob announces click positions only, never measured
// bits, except for the disclosed sample.
SessionResult alice_session(ByteStream& stream, const PulseTrain& prep,
                            const Config& cfg, const SessionOptions& opts);
SessionResult bob_session(ByteStream& stream,
                          const std::vector<ClickRecord>& clicks,
                          double slot_period_s, const Config& cfg,
                          const SessionOptions& opts);

}  // namespace dprqkd::netlink
