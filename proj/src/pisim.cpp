#include "sphynx/pisim.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sphynx/error.hpp"
#include "sphynx/kernels.hpp"

namespace sphynx::pisim {

namespace {
uint64_t pow_mod(uint64_t a, uint64_t e, uint64_t n) {
  unsigned __int128 acc = 1, base = a % n;
  while (e > 0) {
    if (e & 1) acc = acc * base % n;
    base = base * base % n;
    e >>= 1;
  }
  return static_cast<uint64_t>(acc);
}
}  // namespace

bool is_prime_u64(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  uint64_t d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  // Deterministic Miller-Rabin witness set for 64-bit integers.
  for (uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    uint64_t x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (int i = 1; i < r; ++i) {
      x = static_cast<uint64_t>(static_cast<unsigned __int128>(x) * x % n);
      if (x == n - 1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

Field::Field(uint64_t prime) : p(prime) {
  if (p >= (1ULL << 62)) throw Error("field", "modulus must stay below 2^62");
  if (!is_prime_u64(p)) throw Error("field", "modulus must be prime");
}

FixedCodec::FixedCodec(uint64_t prime, int scale, int guard)
    : field(prime), scale_bits(scale), guard_bits(guard) {
  if (scale < 0 || scale > 28) throw Error("codec", "scale_bits out of range");
  if (guard < 0 || guard > 62) throw Error("codec", "guard_bits out of range");
  if (bound() < 1.0 && prime > (1ULL << 16))
    throw Error("codec", "no representable range left after scale and guard");
}

double FixedCodec::bound() const {
  return static_cast<double>(field.p) / std::ldexp(1.0, 2 * scale_bits + guard_bits);
}

uint64_t FixedCodec::encode(double x) const {
  if (!std::isfinite(x) || std::fabs(x) >= bound()) {
    std::ostringstream ctx;
    ctx << "value " << x << " exceeds codec bound " << bound();
    throw Error("overflow", "fixed-point overflow", ctx.str());
  }
  const double scaled = std::nearbyint(x * std::ldexp(1.0, scale_bits));
  const int64_t v = static_cast<int64_t>(scaled);
  return v >= 0 ? static_cast<uint64_t>(v) % field.p
                : field.neg(static_cast<uint64_t>(-v) % field.p);
}

uint64_t FixedCodec::encode2(double x) const {
  if (!std::isfinite(x) || std::fabs(x) >= bound()) {
    std::ostringstream ctx;
    ctx << "value " << x << " exceeds codec bound " << bound();
    throw Error("overflow", "fixed-point overflow", ctx.str());
  }
  const double scaled = std::nearbyint(x * std::ldexp(1.0, 2 * scale_bits));
  const int64_t v = static_cast<int64_t>(scaled);
  return v >= 0 ? static_cast<uint64_t>(v) % field.p
                : field.neg(static_cast<uint64_t>(-v) % field.p);
}

double FixedCodec::decode(uint64_t v) const {
  return static_cast<double>(field.signed_rep(v)) / std::ldexp(1.0, scale_bits);
}

double FixedCodec::decode2(uint64_t v) const {
  return static_cast<double>(field.signed_rep(v)) / std::ldexp(1.0, 2 * scale_bits);
}

bool FixedCodec::overflow2(uint64_t v) const {
  const int64_t s = field.signed_rep(v);
  const double magnitude = std::fabs(static_cast<double>(s));
  return magnitude >= bound() * std::ldexp(1.0, 2 * scale_bits);
}

uint64_t FixedCodec::truncate(uint64_t v) const {
  int64_t s = field.signed_rep(v);
  s >>= scale_bits;  // arithmetic shift: floor division by 2^s
  return s >= 0 ? static_cast<uint64_t>(s) % field.p
                : field.neg(static_cast<uint64_t>(-s) % field.p);
}

uint64_t FixedCodec::relu_truncate(uint64_t v) const {
  int64_t s = field.signed_rep(v);
  if (s < 0) s = 0;
  s >>= scale_bits;
  return static_cast<uint64_t>(s) % field.p;
}

Model random_model(const std::vector<int>& dims, Rng& rng, double weight_scale) {
  if (dims.size() < 2) throw Error("model", "need input and output dims");
  Model m;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Array w({dims[l + 1], dims[l]});
    for (double& v : w.data) v = rng.uniform(-weight_scale, weight_scale);
    Array b({dims[l + 1]});
    for (double& v : b.data) v = rng.uniform(-weight_scale, weight_scale);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

void validate_model(const Model& m) {
  if (m.weights.empty() || m.weights.size() != m.biases.size())
    throw Error("model", "weights and biases must pair up");
  for (size_t l = 0; l < m.weights.size(); ++l) {
    if (m.weights[l].shape.size() != 2 || m.biases[l].shape.size() != 1 ||
        m.biases[l].shape[0] != m.weights[l].shape[0])
      throw Error("model", "layer shapes are inconsistent");
    if (l > 0 && m.weights[l].shape[1] != m.weights[l - 1].shape[0])
      throw Error("model", "layer dims do not chain");
  }
}

std::string model_json(const Model& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (size_t l = 0; l < m.weights.size(); ++l) {
    nlohmann::json w = nlohmann::json::array();
    const Array& wm = m.weights[l];
    for (int r = 0; r < wm.shape[0]; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < wm.shape[1]; ++c) row.push_back(wm.at(r, c));
      w.push_back(row);
    }
    layers.push_back({{"w", w}, {"b", m.biases[l].data}});
  }
  return nlohmann::json{{"layers", layers}}.dump(2) + "\n";
}

Model model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("parse", "model is not valid JSON", e.what());
  }
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array() ||
      j["layers"].empty())
    throw Error("parse", "model needs a non-empty layers array");
  Model m;
  for (const auto& layer : j["layers"]) {
    if (!layer.contains("w") || !layer.contains("b") || !layer["w"].is_array() ||
        layer["w"].empty() || !layer["b"].is_array())
      throw Error("parse", "each layer needs w (matrix) and b (vector)");
    const size_t rows = layer["w"].size();
    const size_t cols = layer["w"][0].size();
    Array w({static_cast<int>(rows), static_cast<int>(cols)});
    for (size_t r = 0; r < rows; ++r) {
      if (!layer["w"][r].is_array() || layer["w"][r].size() != cols)
        throw Error("parse", "weight matrix must be rectangular");
      for (size_t c = 0; c < cols; ++c) w.at(static_cast<int>(r), static_cast<int>(c)) = layer["w"][r][c].get<double>();
    }
    if (layer["b"].size() != rows)
      throw Error("parse", "bias length must match weight rows");
    Array b({static_cast<int>(rows)});
    for (size_t r = 0; r < rows; ++r) b.data[r] = layer["b"][r].get<double>();
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  validate_model(m);
  return m;
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open model file", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

std::vector<double> reference_inference(const Model& m, const std::vector<double>& x) {
  validate_model(m);
  if (static_cast<int>(x.size()) != m.input_dim())
    throw Error("model", "input dim mismatch");
  std::vector<double> y = x;
  for (size_t l = 0; l < m.weights.size(); ++l) {
    const Array& w = m.weights[l];
    std::vector<double> next(w.shape[0], 0.0);
    for (int r = 0; r < w.shape[0]; ++r) {
      double acc = m.biases[l].data[r];
      for (int c = 0; c < w.shape[1]; ++c) acc += w.at(r, c) * y[c];
      next[r] = acc;
    }
    if (l + 1 < m.weights.size())
      for (double& v : next) v = std::max(v, 0.0);
    y = std::move(next);
  }
  return y;
}

namespace {

std::vector<uint64_t> encode_matrix(const Array& w, const FixedCodec& codec) {
  std::vector<uint64_t> out(w.size());
  for (size_t i = 0; i < w.size(); ++i) out[i] = codec.encode(w.data[i]);
  return out;
}

// u = W_fix * y + b2 over F_p; the shared linear-layer arithmetic for the
// oracle, the ledger and the server.
std::vector<uint64_t> fixed_linear(const std::vector<uint64_t>& w_fix, int rows, int cols,
                                   const std::vector<uint64_t>& b2,
                                   const std::vector<uint64_t>& y, const Field& f) {
  std::vector<uint64_t> u(rows);
  kernels::mod_matvec(w_fix.data(), y.data(), u.data(), rows, cols, f.p);
  for (int r = 0; r < rows; ++r) u[r] = f.add(u[r], b2[r]);
  return u;
}

std::string layer_context(size_t layer) {
  std::ostringstream ctx;
  ctx << "layer " << layer;
  return ctx.str();
}

}  // namespace

FixedTrace plaintext_fixed_trace(const Model& m, const FixedCodec& codec,
                                 const std::vector<double>& x) {
  validate_model(m);
  if (static_cast<int>(x.size()) != m.input_dim())
    throw Error("model", "input dim mismatch");
  const Field& f = codec.field;
  FixedTrace tr;
  std::vector<uint64_t> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = codec.encode(x[i]);
  for (size_t l = 0; l < m.weights.size(); ++l) {
    const Array& w = m.weights[l];
    std::vector<uint64_t> w_fix = encode_matrix(w, codec);
    std::vector<uint64_t> b2(w.shape[0]);
    for (int r = 0; r < w.shape[0]; ++r) b2[r] = codec.encode2(m.biases[l].data[r]);
    std::vector<uint64_t> u = fixed_linear(w_fix, w.shape[0], w.shape[1], b2, y, f);
    for (uint64_t v : u)
      if (codec.overflow2(v))
        throw Error("overflow", "fixed-point overflow", layer_context(l));
    tr.pre_act.push_back(u);
    if (l + 1 < m.weights.size()) {
      std::vector<uint64_t> a(u.size());
      for (size_t i = 0; i < u.size(); ++i) a[i] = codec.relu_truncate(u[i]);
      tr.act.push_back(a);
      y = std::move(a);
    } else {
      std::vector<uint64_t> logits(u.size());
      for (size_t i = 0; i < u.size(); ++i) logits[i] = codec.truncate(u[i]);
      tr.act.push_back(logits);
      tr.logits = logits;
    }
  }
  return tr;
}

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::share: return "share";
    case MsgType::gc_in: return "gc_in";
    case MsgType::gc_out: return "gc_out";
  }
  return "?";
}

const char* direction_name(Direction d) {
  return d == Direction::client_to_server ? "client_to_server" : "server_to_client";
}

std::vector<uint8_t> frame_bytes(const Message& m) {
  std::vector<uint8_t> out;
  out.reserve(13 + m.payload.size() * 8);
  out.push_back(static_cast<uint8_t>(m.type));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(m.layer >> (8 * i)));
  const uint64_t count = m.payload.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(count >> (8 * i)));
  for (uint64_t v : m.payload)
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  return out;
}

void write_frame(std::ostream& out, const Message& m) {
  const auto bytes = frame_bytes(m);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "frame write failed");
}

Message read_frame(std::istream& in) {
  uint8_t head[13];
  in.read(reinterpret_cast<char*>(head), 13);
  if (in.gcount() != 13) throw Error("io", "truncated frame header");
  Message m;
  if (head[0] > 2) throw Error("parse", "unknown message type on wire");
  m.type = static_cast<MsgType>(head[0]);
  m.layer = 0;
  for (int i = 0; i < 4; ++i) m.layer |= static_cast<uint32_t>(head[1 + i]) << (8 * i);
  uint64_t count = 0;
  for (int i = 0; i < 8; ++i) count |= static_cast<uint64_t>(head[5 + i]) << (8 * i);
  if (count > (1ULL << 26)) throw Error("parse", "frame element count implausible");
  m.payload.resize(count);
  std::vector<uint8_t> buf(count * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<uint64_t>(in.gcount()) != buf.size())
    throw Error("io", "truncated frame payload");
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(buf[i * 8 + b]) << (8 * b);
    m.payload[i] = v;
  }
  return m;
}

void write_transcript(const Transcript& t, const std::string& bin_path) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw Error("io", "cannot write transcript", bin_path);
  for (const Message& m : t.messages) write_frame(out, m);
}

Transcript read_transcript_frames(const std::string& bin_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error("io", "cannot open transcript", bin_path);
  Transcript t;
  while (in.peek() != std::char_traits<char>::eof()) t.messages.push_back(read_frame(in));
  return t;
}

std::string transcript_sidecar_json(const Transcript& t) {
  nlohmann::json j;
  j["prime"] = t.prime;
  j["scale_bits"] = t.scale_bits;
  j["messages"] = nlohmann::json::array();
  for (const Message& m : t.messages)
    j["messages"].push_back({{"seq", m.seq},
                             {"direction", direction_name(m.direction)},
                             {"type", msg_type_name(m.type)},
                             {"layer", m.layer},
                             {"count", m.payload.size()}});
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Transports

struct QueuePair::Queue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Message> q;
  bool closed = false;

  void push(const Message& m) {
    {
      std::lock_guard<std::mutex> lock(mu);
      if (closed) throw Error("transport", "channel closed");
      q.push_back(m);
    }
    cv.notify_all();
  }

  Message pop() {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return !q.empty() || closed; });
    if (q.empty()) throw Error("transport", "channel closed");
    Message m = std::move(q.front());
    q.pop_front();
    return m;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

namespace {
class QueueEnd final : public Transport {
 public:
  QueueEnd(std::shared_ptr<QueuePair::Queue> out, std::shared_ptr<QueuePair::Queue> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  void send(const Message& m) override { out_->push(m); }
  Message recv() override { return in_->pop(); }
  void shutdown() override {
    out_->close();
    in_->close();
  }
  ~QueueEnd() override = default;

 private:
  std::shared_ptr<QueuePair::Queue> out_, in_;
};
}  // namespace

QueuePair::QueuePair()
    : to_server_(std::make_shared<Queue>()), to_client_(std::make_shared<Queue>()) {
  client_ = std::make_unique<QueueEnd>(to_server_, to_client_);
  server_ = std::make_unique<QueueEnd>(to_client_, to_server_);
}

Transport& QueuePair::client_end() { return *client_; }
Transport& QueuePair::server_end() { return *server_; }

namespace {

class TcpTransport final : public Transport {
 public:
  explicit TcpTransport(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const Message& m) override {
    const auto bytes = frame_bytes(m);
    size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::write(fd_, bytes.data() + off, bytes.size() - off);
      if (n <= 0) throw Error("transport", "tcp write failed");
      off += static_cast<size_t>(n);
    }
  }

  void shutdown() override { ::shutdown(fd_, SHUT_RDWR); }

  Message recv() override {
    uint8_t head[13];
    read_exact(head, 13);
    Message m;
    if (head[0] > 2) throw Error("parse", "unknown message type on wire");
    m.type = static_cast<MsgType>(head[0]);
    for (int i = 0; i < 4; ++i) m.layer |= static_cast<uint32_t>(head[1 + i]) << (8 * i);
    uint64_t count = 0;
    for (int i = 0; i < 8; ++i) count |= static_cast<uint64_t>(head[5 + i]) << (8 * i);
    if (count > (1ULL << 26)) throw Error("parse", "frame element count implausible");
    std::vector<uint8_t> buf(count * 8);
    if (!buf.empty()) read_exact(buf.data(), buf.size());
    m.payload.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
      uint64_t v = 0;
      for (int b = 0; b < 8; ++b) v |= static_cast<uint64_t>(buf[i * 8 + b]) << (8 * b);
      m.payload[i] = v;
    }
    return m;
  }

 private:
  void read_exact(uint8_t* dst, size_t len) {
    size_t off = 0;
    while (off < len) {
      const ssize_t n = ::read(fd_, dst + off, len - off);
      if (n <= 0) throw Error("transport", "tcp read failed or closed");
      off += static_cast<size_t>(n);
    }
  }

  int fd_;
};

}  // namespace

TcpListener::TcpListener(uint16_t listen_port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error("transport", "cannot create socket");
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(listen_port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw Error("transport", "cannot bind loopback socket");
  }
  if (::listen(fd_, 1) != 0) {
    ::close(fd_);
    throw Error("transport", "cannot listen");
  }
  socklen_t len = sizeof(addr);
  getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept_one() {
  const int cfd = ::accept(fd_, nullptr, nullptr);
  if (cfd < 0) throw Error("transport", "accept failed");
  return std::make_unique<TcpTransport>(cfd);
}

std::unique_ptr<Transport> tcp_connect(const std::string& host, uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error("transport", "cannot create socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error("transport", "bad host address", host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw Error("transport", "connect failed");
  }
  return std::make_unique<TcpTransport>(fd);
}

// ---------------------------------------------------------------------------
// Protocol

OfflineMaterial deal_offline(const Model& m, const FixedCodec& codec, Rng& rng) {
  validate_model(m);
  const Field& f = codec.field;
  OfflineMaterial mat;
  for (size_t l = 0; l < m.weights.size(); ++l) {
    const Array& w = m.weights[l];
    const int rows = w.shape[0], cols = w.shape[1];
    std::vector<uint64_t> r(cols), s(rows);
    for (uint64_t& v : r) v = f.sample(rng);
    for (uint64_t& v : s) v = f.sample(rng);
    std::vector<uint64_t> w_fix = encode_matrix(w, codec);
    std::vector<uint64_t> wr(rows);
    kernels::mod_matvec(w_fix.data(), r.data(), wr.data(), rows, cols, f.p);
    for (int i = 0; i < rows; ++i) wr[i] = f.sub(wr[i], s[i]);
    mat.client_r.push_back(std::move(r));
    mat.client_wr_minus_s.push_back(std::move(wr));
    mat.server_s.push_back(std::move(s));
  }
  return mat;
}

namespace {

// Transport wrapper that appends every sent message to a shared transcript
// with its direction and a global sequence number. The protocol is a strict
// ping-pong, so the order is deterministic.
class RecordingTransport final : public Transport {
 public:
  struct Log {
    std::mutex mu;
    uint64_t seq = 0;
    std::vector<Message>* sink = nullptr;
  };

  RecordingTransport(Transport& inner, Log& log, Direction dir)
      : inner_(inner), log_(log), dir_(dir) {}

  void send(const Message& m) override {
    {
      std::lock_guard<std::mutex> lock(log_.mu);
      Message rec = m;
      rec.direction = dir_;
      rec.seq = log_.seq++;
      log_.sink->push_back(std::move(rec));
    }
    inner_.send(m);
  }

  Message recv() override { return inner_.recv(); }

 private:
  Transport& inner_;
  Log& log_;
  Direction dir_;
};

void add_inplace(std::vector<uint64_t>& a, const std::vector<uint64_t>& b, const Field& f) {
  for (size_t i = 0; i < a.size(); ++i) a[i] = f.add(a[i], b[i]);
}

void sub_inplace(std::vector<uint64_t>& a, const std::vector<uint64_t>& b, const Field& f) {
  for (size_t i = 0; i < a.size(); ++i) a[i] = f.sub(a[i], b[i]);
}

}  // namespace

InferenceResult simulate_inference(const Model& m, const std::vector<double>& x,
                                   const ProtocolConfig& cfg, Transport& client_tr,
                                   Transport& server_tr) {
  validate_model(m);
  if (static_cast<int>(x.size()) != m.input_dim())
    throw Error("model", "input dim mismatch");
  const FixedCodec& codec = cfg.codec;
  const Field& f = codec.field;
  const int layers = m.layer_count();

  Rng rng(cfg.seed);
  OfflineMaterial offline = deal_offline(m, codec, rng);

  // Pre-encoded model pieces for both the server and the client-side ledger.
  std::vector<std::vector<uint64_t>> w_fix(layers);
  std::vector<std::vector<uint64_t>> b2(layers);
  for (int l = 0; l < layers; ++l) {
    w_fix[l] = encode_matrix(m.weights[l], codec);
    b2[l].resize(m.weights[l].shape[0]);
    for (int r = 0; r < m.weights[l].shape[0]; ++r)
      b2[l][r] = codec.encode2(m.biases[l].data[r]);
  }

  InferenceResult result;
  result.transcript.prime = f.p;
  result.transcript.scale_bits = codec.scale_bits;

  RecordingTransport::Log log;
  log.sink = &result.transcript.messages;
  RecordingTransport client_rec(client_tr, log, Direction::client_to_server);
  RecordingTransport server_rec(server_tr, log, Direction::server_to_client);

  std::exception_ptr client_err, server_err;

  auto client_fn = [&] {
    // y at scale 2^s; the ledger carries the ideal stage's plaintext view.
    std::vector<uint64_t> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = codec.encode(x[i]);
    std::vector<uint64_t> ledger = y;

    std::vector<uint64_t> share0 = y;
    sub_inplace(share0, offline.client_r[0], f);
    client_rec.send({MsgType::share, 0, share0});

    for (int l = 0; l < layers; ++l) {
      Message in = client_rec.recv();
      const MsgType want = l + 1 < layers ? MsgType::gc_in : MsgType::share;
      if (in.type != want || in.layer != static_cast<uint32_t>(l))
        throw Error("protocol", "unexpected message", layer_context(l));
      // Reconstruct W y + b from the two shares.
      std::vector<uint64_t> u = in.payload;
      add_inplace(u, offline.client_wr_minus_s[l], f);

      const std::vector<uint64_t> expect =
          fixed_linear(w_fix[l], m.weights[l].shape[0], m.weights[l].shape[1], b2[l],
                       ledger, f);
      for (size_t i = 0; i < u.size(); ++i)
        if (u[i] != expect[i])
          throw Error("share-correctness", "share sum deviates from the plaintext ledger",
                      layer_context(l));
      for (uint64_t v : u)
        if (codec.overflow2(v))
          throw Error("overflow", "fixed-point overflow", layer_context(l));

      if (l + 1 < layers) {
        std::vector<uint64_t> next(u.size());
        for (size_t i = 0; i < u.size(); ++i) next[i] = codec.relu_truncate(u[i]);
        ledger = next;
        std::vector<uint64_t> out = next;
        sub_inplace(out, offline.client_r[l + 1], f);
        client_rec.send({MsgType::gc_out, static_cast<uint32_t>(l), out});
      } else {
        result.logits_fixed.resize(u.size());
        for (size_t i = 0; i < u.size(); ++i) result.logits_fixed[i] = codec.truncate(u[i]);
        result.logits.resize(u.size());
        for (size_t i = 0; i < u.size(); ++i)
          result.logits[i] = codec.decode(result.logits_fixed[i]);
      }
    }
  };

  auto server_fn = [&] {
    Message first = server_rec.recv();
    if (first.type != MsgType::share || first.layer != 0)
      throw Error("protocol", "expected the input share first");
    std::vector<uint64_t> t = first.payload;
    for (int l = 0; l < layers; ++l) {
      const int rows = m.weights[l].shape[0], cols = m.weights[l].shape[1];
      if (static_cast<int>(t.size()) != cols)
        throw Error("protocol", "share length mismatch", layer_context(l));
      std::vector<uint64_t> lin(rows);
      kernels::mod_matvec(w_fix[l].data(), t.data(), lin.data(), rows, cols, f.p);
      add_inplace(lin, offline.server_s[l], f);
      add_inplace(lin, b2[l], f);
      if (l + 1 < layers) {
        server_rec.send({MsgType::gc_in, static_cast<uint32_t>(l), lin});
        Message back = server_rec.recv();
        if (back.type != MsgType::gc_out || back.layer != static_cast<uint32_t>(l))
          throw Error("protocol", "expected the nonlinear-stage output", layer_context(l));
        t = back.payload;
      } else {
        server_rec.send({MsgType::share, static_cast<uint32_t>(l), lin});
      }
    }
  };

  auto close_all = [&] {
    client_tr.shutdown();
    server_tr.shutdown();
  };

  std::thread server_thread([&] {
    try {
      server_fn();
    } catch (...) {
      server_err = std::current_exception();
      close_all();
    }
  });
  try {
    client_fn();
  } catch (...) {
    client_err = std::current_exception();
    close_all();
  }
  server_thread.join();

  if (client_err) std::rethrow_exception(client_err);
  if (server_err) std::rethrow_exception(server_err);
  return result;
}

InferenceResult simulate_inference(const Model& m, const std::vector<double>& x,
                                   const ProtocolConfig& cfg) {
  QueuePair qp;
  return simulate_inference(m, x, cfg, qp.client_end(), qp.server_end());
}

AuditResult transcript_audit(const Model& m, const std::vector<double>& x,
                             const FixedCodec& codec, int trials, double alpha,
                             uint64_t seed) {
  if (trials < 1) throw Error("audit", "need at least one trial");
  if (codec.field.p > (1ULL << 20))
    throw Error("audit", "audit needs a small field to bucket values");
  const uint64_t p = codec.field.p;

  Rng root(seed);
  std::vector<std::vector<uint64_t>> counts;  // slot -> value histogram
  for (int trial = 0; trial < trials; ++trial) {
    ProtocolConfig cfg;
    cfg.codec = codec;
    cfg.seed = root.substream(trial).seed();
    InferenceResult res = simulate_inference(m, x, cfg);
    size_t slot = 0;
    for (const Message& msg : res.transcript.messages) {
      if (msg.direction != Direction::client_to_server) continue;
      for (uint64_t v : msg.payload) {
        if (slot >= counts.size()) counts.emplace_back(p, 0);
        counts[slot][v]++;
        ++slot;
      }
    }
  }

  AuditResult out;
  out.slots = static_cast<int>(counts.size());
  out.min_pvalue = 1.0;
  bool all = true;
  // Bonferroni across slots keeps the whole-audit false-alarm rate at alpha.
  const double slot_alpha = alpha / std::max(1, out.slots);
  for (const auto& hist : counts) {
    auto res = stats::uniformity_test(hist, slot_alpha);
    out.min_pvalue = std::min(out.min_pvalue, res.pvalue);
    all = all && res.pass;
    out.per_slot.push_back(res);
  }
  out.pass = all;
  return out;
}

}  // namespace sphynx::pisim
