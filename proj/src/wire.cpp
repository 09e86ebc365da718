#include "bnc/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <exception>
#include <numeric>
#include <thread>

namespace bnc {

BitstreamHeader BitstreamHeader::of(const CodecFingerprint& fp) {
  return {fp.sample_rate, fp.strides, fp.rvq_layers, fp.codebook_bits()};
}

CodecFingerprint BitstreamHeader::fingerprint() const {
  return {sample_rate, strides, rvq_layers, Index{1} << codebook_bits};
}

void BitstreamHeader::validate() const {
  if (sample_rate == 0) throw ConfigError("bitstream sample rate must be positive");
  if (strides.empty() || strides.size() > 255) throw ConfigError("bitstream needs 1..255 strides");
  for (Index s : strides)
    if (s < 1 || s > 255) throw ConfigError("bitstream strides must lie in 1..255");
  if (rvq_layers < 1 || rvq_layers > 255) throw ConfigError("bitstream rvq_layers must lie in 1..255");
  if (codebook_bits < 1 || codebook_bits > 16) throw ConfigError("codebook_bits must lie in 1..16");
}

void BitstreamHeader::write(Bytes& out) const {
  validate();
  ByteWriter w(out);
  w.raw(kWireMagic, 4);
  w.u8(kWireVersion);
  w.u32(sample_rate);
  w.u8(std::uint8_t(strides.size()));
  for (Index s : strides) w.u8(std::uint8_t(s));
  w.u8(std::uint8_t(rvq_layers));
  w.u8(std::uint8_t(codebook_bits));
}

BitstreamHeader BitstreamHeader::read(ByteReader& in) {
  using K = WireError::Kind;
  auto need = [&](std::size_t n) {
    if (in.remaining() < n) throw WireError(K::truncated, "truncated bitstream header", in.offset());
  };
  need(4);
  const std::string magic = in.str(4, "magic");
  if (magic != std::string(kWireMagic, 4)) throw WireError(K::magic, "bad bitstream magic", 0);
  need(1);
  const std::uint8_t version = in.u8("version");
  if (version != kWireVersion)
    throw WireError(K::version, "unsupported bitstream version " + std::to_string(version), 4);
  BitstreamHeader h;
  need(5);
  h.sample_rate = in.u32("sample rate");
  const std::size_t n = in.u8("stride count");
  need(n + 2);
  for (std::size_t i = 0; i < n; ++i) h.strides.push_back(in.u8("stride"));
  h.rvq_layers = in.u8("rvq layers");
  h.codebook_bits = in.u8("codebook bits");
  try {
    h.validate();
  } catch (const ConfigError& e) {
    throw WireError(K::header, std::string("invalid bitstream header: ") + e.what(), 5);
  }
  return h;
}

void pack_indices(const std::int32_t* indices, Index n, Index bits, std::uint8_t* out) {
  const std::size_t bytes = std::size_t((n * bits + 7) / 8);
  std::memset(out, 0, bytes);
  std::size_t bit = 0;
  for (Index i = 0; i < n; ++i) {
    const auto v = std::uint32_t(indices[i]);
    for (Index b = bits - 1; b >= 0; --b, ++bit)
      if ((v >> b) & 1u) out[bit / 8] |= std::uint8_t(0x80u >> (bit % 8));
  }
}

void unpack_indices(const std::uint8_t* in, Index n, Index bits, std::int32_t* out) {
  std::size_t bit = 0;
  for (Index i = 0; i < n; ++i) {
    std::uint32_t v = 0;
    for (Index b = 0; b < bits; ++b, ++bit) v = (v << 1) | ((in[bit / 8] >> (7 - bit % 8)) & 1u);
    out[i] = std::int32_t(v);
  }
}

namespace {

void check_grid(const CodeGrid& codes, const BitstreamHeader& h) {
  if (codes.frames() > 0 && codes.layers() != h.rvq_layers)
    throw ConfigError("code grid has " + std::to_string(codes.layers()) + " layers, fingerprint says " +
                      std::to_string(h.rvq_layers));
  if (std::uint64_t(codes.frames()) > 0xffffffffull) throw ConfigError("too many frames for a u32 frame index");
}

void check_frame(const std::int32_t* row, const BitstreamHeader& h, Index frame, std::size_t offset) {
  const std::int64_t limit = std::int64_t{1} << h.codebook_bits;
  for (Index n = 0; n < h.rvq_layers; ++n)
    if (row[n] < 0 || row[n] >= limit)
      throw WireError(WireError::Kind::range,
                      "index " + std::to_string(row[n]) + " in frame " + std::to_string(frame) + " layer " +
                          std::to_string(n) + " exceeds " + std::to_string(h.codebook_bits) + " bits",
                      offset, frame);
}

}  // namespace

Bytes pack(const CodeGrid& codes) {
  const BitstreamHeader h = BitstreamHeader::of(codes.fingerprint);
  check_grid(codes, h);
  Bytes out;
  h.write(out);
  out.reserve(out.size() + std::size_t(codes.frames()) * h.frame_size());
  for (Index i = 0; i < codes.frames(); ++i) {
    const std::int32_t* row = codes.indices.data() + i * codes.layers();
    check_frame(row, h, i, out.size());
    ByteWriter(out).u32(std::uint32_t(i));
    const std::size_t at = out.size();
    out.resize(at + h.payload_size());
    pack_indices(row, h.rvq_layers, h.codebook_bits, out.data() + at);
  }
  return out;
}

CodeGrid unpack(const Bytes& bytes) {
  using K = WireError::Kind;
  ByteReader in(bytes);
  const BitstreamHeader h = BitstreamHeader::read(in);
  const std::size_t body = in.remaining();
  const std::size_t frame = h.frame_size();
  const Index frames = Index(body / frame);
  CodeGrid g;
  g.fingerprint = h.fingerprint();
  g.indices.resize(frames, h.rvq_layers);
  for (Index i = 0; i < frames; ++i) {
    const std::size_t at = in.offset();
    const std::uint32_t idx = in.u32("frame index");
    if (idx != std::uint32_t(i))
      throw WireError(K::sequence, "frame " + std::to_string(i) + " carries index " + std::to_string(idx), at, i);
    unpack_indices(bytes.data() + in.offset(), h.rvq_layers, h.codebook_bits, g.indices.data() + i * h.rvq_layers);
    in.str(h.payload_size(), "payload");
  }
  if (!in.done())
    throw WireError(K::truncated, "truncated frame " + std::to_string(frames), in.offset(), frames);
  return g;
}

Bitrate bitrate(const CodecFingerprint& fp) {
  std::int64_t num = std::int64_t(fp.sample_rate) * fp.rvq_layers * fp.codebook_bits();
  std::int64_t den = fp.downsampling();
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

Bitrate bitrate(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.sample_rate != double(std::uint32_t(cfg.sample_rate)))
    throw ConfigError("bitrate needs an integral sample rate");
  return bitrate(CodecFingerprint::of(cfg));
}

// ---------------------------------------------------------------------------

void PipeChannel::write(const std::uint8_t* data, std::size_t n) {
  {
    std::lock_guard lock(mu_);
    if (closed_) throw DataError("write to a closed pipe");
    buf_.insert(buf_.end(), data, data + n);
  }
  cv_.notify_all();
}

std::size_t PipeChannel::read(std::uint8_t* data, std::size_t n) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !buf_.empty() || closed_; });
  const std::size_t k = std::min(n, buf_.size());
  std::copy_n(buf_.begin(), k, data);
  buf_.erase(buf_.begin(), buf_.begin() + std::ptrdiff_t(k));
  return k;
}

void PipeChannel::close_write() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

SocketChannel::~SocketChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void SocketChannel::write(const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(fd_, data, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw DataError(std::string("socket send failed: ") + std::strerror(errno));
    }
    data += k;
    n -= std::size_t(k);
  }
}

std::size_t SocketChannel::read(std::uint8_t* data, std::size_t n) {
  for (;;) {
    const ssize_t k = ::recv(fd_, data, n, 0);
    if (k >= 0) return std::size_t(k);
    if (errno != EINTR) throw DataError(std::string("socket receive failed: ") + std::strerror(errno));
  }
}

void SocketChannel::close_write() { ::shutdown(fd_, SHUT_WR); }

Endpoint parse_endpoint(const std::string& uri) {
  const std::string scheme = "tcp://";
  if (uri.rfind(scheme, 0) != 0) throw ConfigError("unsupported endpoint '" + uri + "' (expected tcp://host:port)");
  const std::string rest = uri.substr(scheme.size());
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("endpoint '" + uri + "' needs host:port");
  Endpoint e;
  e.host = rest.substr(0, colon);
  const std::string port = rest.substr(colon + 1);
  if (port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string::npos ||
      std::stoul(port) > 65535)
    throw ConfigError("endpoint '" + uri + "' has an invalid port");
  e.port = std::uint16_t(std::stoul(port));
  return e;
}

namespace {

addrinfo* resolve(const Endpoint& e, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(e.host.c_str(), std::to_string(e.port).c_str(), &hints, &res);
  if (rc != 0) throw DataError("cannot resolve '" + e.host + "': " + ::gai_strerror(rc));
  return res;
}

}  // namespace

TcpListener::TcpListener(const std::string& uri) {
  const Endpoint e = parse_endpoint(uri);
  addrinfo* res = resolve(e, true);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const bool ok = fd_ >= 0 && ::bind(fd_, res->ai_addr, res->ai_addrlen) == 0 && ::listen(fd_, 4) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    const std::string err = std::strerror(errno);
    if (fd_ >= 0) ::close(fd_);
    throw DataError("cannot listen on " + uri + ": " + err);
  }
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<SocketChannel> TcpListener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<SocketChannel>(fd);
    if (errno != EINTR) throw DataError(std::string("accept failed: ") + std::strerror(errno));
  }
}

std::unique_ptr<SocketChannel> connect_channel(const std::string& uri) {
  const Endpoint e = parse_endpoint(uri);
  addrinfo* res = resolve(e, false);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    const std::string err = std::strerror(errno);
    if (fd >= 0) ::close(fd);
    throw DataError("cannot connect to " + uri + ": " + err);
  }
  return std::make_unique<SocketChannel>(fd);
}

// ---------------------------------------------------------------------------

StreamSender::StreamSender(ByteChannel& channel, const CodecFingerprint& fp)
    : ch_(channel), header_(BitstreamHeader::of(fp)) {
  header_.validate();
}

void StreamSender::ensure_header() {
  if (header_sent_) return;
  Bytes h;
  header_.write(h);
  ch_.write(h.data(), h.size());
  bytes_sent_ += h.size();
  header_sent_ = true;
}

void StreamSender::send_frame(const std::int32_t* indices) {
  ensure_header();
  Bytes f;
  check_frame(indices, header_, next_, bytes_sent_);
  ByteWriter(f).u32(std::uint32_t(next_));
  f.resize(header_.frame_size());
  pack_indices(indices, header_.rvq_layers, header_.codebook_bits, f.data() + 4);
  ch_.write(f.data(), f.size());
  bytes_sent_ += f.size();
  payload_bytes_ += header_.payload_size();
  ++next_;
}

void StreamSender::send(const CodeGrid& codes) {
  if (!(codes.fingerprint == header_.fingerprint()))
    throw ConfigError("code grid fingerprint does not match the stream header");
  check_grid(codes, header_);
  for (Index i = 0; i < codes.frames(); ++i) send_frame(codes.indices.data() + i * codes.layers());
}

void StreamSender::finish() {
  ensure_header();
  ch_.close_write();
}

std::size_t StreamReceiver::read_exact(std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const std::size_t k = ch_.read(dst + got, n - got);
    if (k == 0) break;
    got += k;
  }
  return got;
}

const BitstreamHeader& StreamReceiver::header() const {
  if (!header_) throw DataError("no bitstream header received yet");
  return *header_;
}

bool StreamReceiver::next() {
  using K = WireError::Kind;
  if (!header_) {
    Bytes fixed(10);
    const std::size_t got = read_exact(fixed.data(), fixed.size());
    if (got >= 4 && std::memcmp(fixed.data(), kWireMagic, 4) != 0) throw WireError(K::magic, "bad bitstream magic", 0);
    if (got < fixed.size()) throw WireError(K::truncated, "stream closed inside the header", got);
    Bytes all = fixed;
    all.resize(fixed.size() + fixed[9] + 2);
    const std::size_t rest = read_exact(all.data() + fixed.size(), all.size() - fixed.size());
    if (rest < all.size() - fixed.size())
      throw WireError(K::truncated, "stream closed inside the header", fixed.size() + rest);
    ByteReader in(all);
    header_ = BitstreamHeader::read(in);
    offset_ = all.size();
    codes_.fingerprint = header_->fingerprint();
    codes_.indices.resize(0, header_->rvq_layers);
  }
  const Index frame = codes_.frames();
  Bytes f(header_->frame_size());
  const std::size_t got = read_exact(f.data(), f.size());
  if (got == 0) return false;
  if (got < f.size())
    throw WireError(K::truncated, "stream closed inside frame " + std::to_string(frame), offset_ + got, frame);
  std::uint32_t idx;
  std::memcpy(&idx, f.data(), 4);
  if (idx != std::uint32_t(frame))
    throw WireError(K::sequence, "frame " + std::to_string(frame) + " carries index " + std::to_string(idx), offset_,
                    frame);
  codes_.indices.conservativeResize(frame + 1, header_->rvq_layers);
  unpack_indices(f.data() + 4, header_->rvq_layers, header_->codebook_bits, codes_.indices.data() + frame * header_->rvq_layers);
  offset_ += f.size();
  payload_bytes_ += header_->payload_size();
  return true;
}

SessionReport stream_session(ByteChannel& send, ByteChannel& recv, const CodeGrid& codes,
                             const std::function<void(const CodeGrid&)>& on_prefix) {
  std::exception_ptr send_error;
  std::thread sender([&] {
    try {
      StreamSender s(send, codes.fingerprint);
      s.send(codes);
      s.finish();
    } catch (...) {
      send_error = std::current_exception();
      send.close_write();
    }
  });
  SessionReport report;
  StreamReceiver r(recv);
  try {
    while (r.next()) {
      if (report.frames_before_first_decode == 0) report.frames_before_first_decode = r.codes().frames();
      if (on_prefix) on_prefix(r.codes());
    }
  } catch (...) {
    sender.join();
    if (send_error) std::rethrow_exception(send_error);
    throw;
  }
  sender.join();
  if (send_error) std::rethrow_exception(send_error);
  report.received = r.codes();
  report.header_bytes = r.has_header() ? r.header().size() : 0;
  report.payload_bytes = r.payload_bytes();
  report.total_bytes = r.bytes_received();
  return report;
}

}  // namespace bnc
