#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sphynx/array.hpp"
#include "sphynx/rng.hpp"
#include "sphynx/stats.hpp"

namespace sphynx::pisim {

bool is_prime_u64(uint64_t n);

// Prime field F_p with canonical representatives in [0, p). p must stay below
// 2^62 so signed representatives fit in int64 and products in __int128.
struct Field {
  uint64_t p;
  explicit Field(uint64_t prime);

  uint64_t add(uint64_t a, uint64_t b) const { return (a + b) % p; }
  uint64_t sub(uint64_t a, uint64_t b) const { return (a + p - b) % p; }
  uint64_t mul(uint64_t a, uint64_t b) const {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % p);
  }
  uint64_t neg(uint64_t a) const { return a == 0 ? 0 : p - a; }
  uint64_t sample(Rng& rng) const { return rng.below(p); }
  // Signed representative in (-p/2, p/2].
  int64_t signed_rep(uint64_t v) const {
    return v > p / 2 ? static_cast<int64_t>(v) - static_cast<int64_t>(p)
                     : static_cast<int64_t>(v);
  }
};

inline constexpr uint64_t kDefaultPrime = (1ULL << 61) - 1;

// Fixed-point embedding of reals into F_p at scale 2^scale_bits. guard_bits
// reserve headroom so products (scale 2^(2s)) plus dot-product accumulation
// stay below p/2.
struct FixedCodec {
  Field field;
  int scale_bits = 12;
  int guard_bits = 24;

  FixedCodec(uint64_t prime = kDefaultPrime, int scale = 12, int guard = 24);

  // Largest representable magnitude for encode(): p / 2^(2s + guard).
  double bound() const;
  uint64_t encode(double x) const;    // scale 2^s
  uint64_t encode2(double x) const;   // scale 2^(2s), for biases joining products
  double decode(uint64_t v) const;    // signed / 2^s
  double decode2(uint64_t v) const;   // signed / 2^(2s)
  // Pre-truncation overflow: |signed(v)| at scale 2^(2s) breaches the bound.
  bool overflow2(uint64_t v) const;
  // Scale 2^(2s) -> 2^s: arithmetic shift of the signed representative
  // (floor division, rounds toward minus infinity).
  uint64_t truncate(uint64_t v) const;
  // ReLU then truncate, still on the signed representative.
  uint64_t relu_truncate(uint64_t v) const;
};

// Plain dense model: layer i maps dims[i] -> dims[i+1] with weights[i]
// ([out, in] row-major) and biases[i]; ReLU after every layer but the last.
struct Model {
  std::vector<Array> weights;
  std::vector<Array> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return weights.empty() ? 0 : weights[0].shape[1]; }
  int output_dim() const { return weights.empty() ? 0 : weights.back().shape[0]; }
};

Model random_model(const std::vector<int>& dims, Rng& rng, double weight_scale = 0.5);
// Structural checks: layers pair up, bias lengths match, dims chain.
void validate_model(const Model& m);
std::string model_json(const Model& m);
Model model_from_json(const std::string& text);
Model load_model(const std::string& path);

// Reference forward pass in exact real arithmetic.
std::vector<double> reference_inference(const Model& m, const std::vector<double>& x);

// Plaintext fixed-point oracle: the exact field elements an honest protocol
// run must produce, layer by layer (same truncation, same overflow checks).
struct FixedTrace {
  std::vector<std::vector<uint64_t>> pre_act;  // per layer, scale 2^(2s)
  std::vector<std::vector<uint64_t>> act;      // per layer output, scale 2^s
  std::vector<uint64_t> logits;                // final, scale 2^s
};
FixedTrace plaintext_fixed_trace(const Model& m, const FixedCodec& codec,
                                 const std::vector<double>& x);

enum class MsgType : uint8_t { share = 0, gc_in = 1, gc_out = 2 };
const char* msg_type_name(MsgType t);

enum class Direction { client_to_server, server_to_client };
const char* direction_name(Direction d);

struct Message {
  MsgType type = MsgType::share;
  uint32_t layer = 0;
  std::vector<uint64_t> payload;
  Direction direction = Direction::client_to_server;
  uint64_t seq = 0;  // logical timestamp (sidecar only, not on the wire)
};

// Wire frame: [u8 type][u32 layer LE][u64 count LE][count x u64 LE].
void write_frame(std::ostream& out, const Message& m);
Message read_frame(std::istream& in);
std::vector<uint8_t> frame_bytes(const Message& m);

struct Transcript {
  uint64_t prime = 0;
  int scale_bits = 0;
  std::vector<Message> messages;
};

void write_transcript(const Transcript& t, const std::string& bin_path);
std::string transcript_sidecar_json(const Transcript& t);
Transcript read_transcript_frames(const std::string& bin_path);

// Blocking duplex byte-free message channel.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const Message& m) = 0;
  virtual Message recv() = 0;
  // Unblock a peer stuck in recv(); used to abort a run after an error.
  virtual void shutdown() {}
};

// In-process queue pair (default transport).
class QueuePair {
 public:
  QueuePair();
  Transport& client_end();
  Transport& server_end();

  struct Queue;  // in-process message queue, defined in the .cpp

 private:
  std::shared_ptr<Queue> to_server_, to_client_;
  std::unique_ptr<Transport> client_, server_;
};

// Loopback TCP transport speaking the wire format. listen_port 0 picks an
// ephemeral port; port() reports it after construction.
class TcpListener {
 public:
  explicit TcpListener(uint16_t listen_port = 0);
  ~TcpListener();
  uint16_t port() const { return port_; }
  std::unique_ptr<Transport> accept_one();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};
std::unique_ptr<Transport> tcp_connect(const std::string& host, uint16_t port);

// Offline phase: the dealer stands in for the HE channel, handing the client
// r_i and W_i r_i - s_i and the server s_i.
struct OfflineMaterial {
  std::vector<std::vector<uint64_t>> client_r;           // per layer, input dim
  std::vector<std::vector<uint64_t>> client_wr_minus_s;  // per layer, output dim
  std::vector<std::vector<uint64_t>> server_s;           // per layer, output dim
};
OfflineMaterial deal_offline(const Model& m, const FixedCodec& codec, Rng& rng);

struct ProtocolConfig {
  FixedCodec codec;
  uint64_t seed = 0;
  ProtocolConfig() : codec() {}
};

struct InferenceResult {
  std::vector<double> logits;
  std::vector<uint64_t> logits_fixed;  // scale 2^s field elements
  Transcript transcript;
};

// Run the two-party ladder over the given transports (both parties on
// threads). The ideal nonlinear stage reconstructs W y + b from the two
// shares, asserts it against its plaintext ledger, checks overflow, applies
// the fixed-point ReLU and re-shares.
InferenceResult simulate_inference(const Model& m, const std::vector<double>& x,
                                   const ProtocolConfig& cfg, Transport& client_tr,
                                   Transport& server_tr);
// Convenience: in-process queue pair.
InferenceResult simulate_inference(const Model& m, const std::vector<double>& x,
                                   const ProtocolConfig& cfg);

// Uniformity audit of every client->server slot over protocol runs with
// fresh offline randomness (small p). Chi-square per payload slot.
struct AuditResult {
  bool pass = false;
  double min_pvalue = 1.0;
  int slots = 0;
  std::vector<stats::ChiSquareResult> per_slot;
};
AuditResult transcript_audit(const Model& m, const std::vector<double>& x,
                             const FixedCodec& codec, int trials, double alpha,
                             uint64_t seed);

}  // namespace sphynx::pisim
