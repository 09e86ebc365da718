#pragma once

// Bitstream for RVQ codes and a framed streaming transport.
//
//   header: "BNC1" | u8 version = 1 | u32 sample_rate (LE) | u8 stride count |
//           u8 stride... | u8 rvq_layers | u8 codebook_bits
//   frame:  u32 frame index (LE) | N indices of codebook_bits each, packed
//           MSB-first and zero-padded to a whole byte
//
// Poses never travel on the wire; the receiver supplies its own condition.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "bnc/bytes.hpp"
#include "bnc/codec.hpp"
#include "bnc/error.hpp"

namespace bnc {

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr char kWireMagic[4] = {'B', 'N', 'C', '1'};

class WireError : public ParseError {
 public:
  enum class Kind { magic, version, header, truncated, range, sequence };

  WireError(Kind kind, const std::string& what, std::size_t offset, Index frame = -1)
      : ParseError(what, offset), kind_(kind), frame_(frame) {}
  Kind kind() const { return kind_; }
  Index frame() const { return frame_; }  // -1 outside any frame

 private:
  Kind kind_;
  Index frame_;
};

struct BitstreamHeader {
  std::uint32_t sample_rate = 0;
  std::vector<Index> strides;
  Index rvq_layers = 0;
  Index codebook_bits = 0;

  static BitstreamHeader of(const CodecFingerprint& fp);
  CodecFingerprint fingerprint() const;

  void validate() const;
  std::size_t size() const { return 4 + 1 + 4 + 1 + strides.size() + 2; }
  std::size_t frame_size() const { return 4 + payload_size(); }
  std::size_t payload_size() const { return std::size_t((rvq_layers * codebook_bits + 7) / 8); }

  void write(Bytes& out) const;
  static BitstreamHeader read(ByteReader& in);
  bool operator==(const BitstreamHeader&) const = default;
};

// One frame's indices (length N) packed MSB-first.
void pack_indices(const std::int32_t* indices, Index n, Index bits, std::uint8_t* out);
void unpack_indices(const std::uint8_t* in, Index n, Index bits, std::int32_t* out);

Bytes pack(const CodeGrid& codes);
CodeGrid unpack(const Bytes& bytes);

struct Bitrate {
  std::int64_t num = 0;  // bits per second = num / den
  std::int64_t den = 1;

  double bps() const { return double(num) / double(den); }
  bool operator==(const Bitrate&) const = default;
};

// sample_rate / M * N * codebook_bits, payload only, as a reduced fraction.
Bitrate bitrate(const ModelConfig& cfg);
Bitrate bitrate(const CodecFingerprint& fp);

// Ordered, reliable byte stream. read() blocks until at least one byte is
// available and returns 0 once the writer has closed and the data is drained.
class ByteChannel {
 public:
  virtual ~ByteChannel() = default;
  virtual void write(const std::uint8_t* data, std::size_t n) = 0;
  virtual std::size_t read(std::uint8_t* data, std::size_t n) = 0;
  virtual void close_write() = 0;
};

// In-process loopback pipe; one writer thread, one reader thread.
class PipeChannel : public ByteChannel {
 public:
  void write(const std::uint8_t* data, std::size_t n) override;
  std::size_t read(std::uint8_t* data, std::size_t n) override;
  void close_write() override;

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::uint8_t> buf_;
  bool closed_ = false;
};

class SocketChannel : public ByteChannel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  ~SocketChannel() override;
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;

  void write(const std::uint8_t* data, std::size_t n) override;
  std::size_t read(std::uint8_t* data, std::size_t n) override;
  void close_write() override;

 private:
  int fd_;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

// "tcp://host:port"; throws ConfigError for anything else.
Endpoint parse_endpoint(const std::string& uri);

class TcpListener {
 public:
  explicit TcpListener(const std::string& uri);  // port 0 picks a free port
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<SocketChannel> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<SocketChannel> connect_channel(const std::string& uri);

class StreamSender {
 public:
  StreamSender(ByteChannel& channel, const CodecFingerprint& fp);

  // The header goes out with the first frame (or at finish if none).
  void send_frame(const std::int32_t* indices);
  void send(const CodeGrid& codes);
  void finish();

  Index frames_sent() const { return next_; }
  std::size_t payload_bytes() const { return payload_bytes_; }
  std::size_t bytes_sent() const { return bytes_sent_; }

 private:
  void ensure_header();

  ByteChannel& ch_;
  BitstreamHeader header_;
  bool header_sent_ = false;
  Index next_ = 0;
  std::size_t payload_bytes_ = 0, bytes_sent_ = 0;
};

class StreamReceiver {
 public:
  explicit StreamReceiver(ByteChannel& channel) : ch_(channel) {}

  // Reads one frame. False on a clean end of stream at a frame boundary;
  // a stream closed mid-header or mid-frame throws a truncation WireError.
  bool next();

  bool has_header() const { return header_.has_value(); }
  const BitstreamHeader& header() const;
  // Every frame received so far.
  const CodeGrid& codes() const { return codes_; }
  std::size_t payload_bytes() const { return payload_bytes_; }
  std::size_t bytes_received() const { return offset_; }

 private:
  std::size_t read_exact(std::uint8_t* dst, std::size_t n);

  ByteChannel& ch_;
  std::optional<BitstreamHeader> header_;
  CodeGrid codes_;
  std::size_t offset_ = 0, payload_bytes_ = 0;
};

struct SessionReport {
  CodeGrid received;
  Index frames_before_first_decode = 0;  // frames buffered before the first decodable prefix
  std::size_t header_bytes = 0;
  std::size_t payload_bytes = 0;
  std::size_t total_bytes = 0;
};

// Sends `codes` on `send` from a worker thread while receiving on `recv`;
// on_prefix sees the decodable prefix after every whole frame.
SessionReport stream_session(ByteChannel& send, ByteChannel& recv, const CodeGrid& codes,
                             const std::function<void(const CodeGrid&)>& on_prefix = {});

}  // namespace bnc
