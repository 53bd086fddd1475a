#pragma once

// Parameters, checkpoints, optimizers and the layers built on tensor ops:
// GRU (fused step with a hand-written backward), graph attention, trilinear
// similarity.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "twc/error.hpp"
#include "twc/rng.hpp"
#include "twc/tensor.hpp"

namespace twc::nn {

using tensor::Shape;
using tensor::Tensor;

class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  // New parameter with entries uniform in +-1/sqrt(fan_in). Creation order
  // fixes the random stream, so equal seeds give equal stores.
  Tensor& create(const std::string& name, Shape shape, std::size_t fan_in) {
    if (params_.contains(name)) throw InvalidConfig("duplicate parameter '" + name + "'");
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::vector<double> v(tensor::numel(shape));
    for (auto& x : v) x = rng_.uniform(-bound, bound);
    auto [it, ok] = params_.emplace(name, Tensor::make(std::move(shape), std::move(v), true));
    return it->second;
  }

  Tensor& create_zeros(const std::string& name, Shape shape) {
    if (params_.contains(name)) throw InvalidConfig("duplicate parameter '" + name + "'");
    auto [it, ok] = params_.emplace(name, Tensor::zeros(std::move(shape), true));
    return it->second;
  }

  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidConfig("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidConfig("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.contains(name); }

  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [k, t] : params_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [k, t] : params_) t.zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [k, t] : params_)
      for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
  }

  // Deep copy of values (fresh leaves, zero grads).
  ParameterStore snapshot() const {
    ParameterStore out(seed_);
    for (const auto& [k, t] : params_) out.params_.emplace(k, Tensor::make(t.shape(), t.data(), true));
    return out;
  }

  // Copies values from `other`, which must have the same names and shapes.
  void assign(const ParameterStore& other) {
    for (auto& [k, t] : params_) {
      const Tensor& o = other.get(k);
      if (o.shape() != t.shape())
        throw ShapeMismatch("parameter '" + k + "': " + tensor::shape_str(t.shape()) + " vs " + tensor::shape_str(o.shape()));
      t.mutable_data() = o.data();
    }
  }

 private:
  std::uint64_t seed_;
  Rng rng_;
  std::map<std::string, Tensor> params_;
};

// ---------------------------------------------------------------------------
// checkpoints: "TWCP", u32 version, then per tensor until EOF:
// u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data. All LE.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

inline void put_f64(std::ostream& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d)); }

template <class T>
bool get_le(std::istream& in, T& v) {
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) return false;
    acc |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  v = static_cast<T>(acc);
  return true;
}

}  // namespace detail

inline void save_checkpoint(const ParameterStore& ps, std::ostream& out) {
  out.write("TWCP", 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : ps.all()) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.data()) detail::put_f64(out, v);
  }
}

inline void save_checkpoint(const ParameterStore& ps, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  save_checkpoint(ps, out);
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

// Reads every tensor of a checkpoint as (name -> tensor).
inline std::map<std::string, Tensor> read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "TWCP", 4) != 0) throw CheckpointError("bad checkpoint magic");
  std::uint32_t version = 0;
  if (!detail::get_le(in, version) || version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::map<std::string, Tensor> out;
  while (true) {
    std::uint32_t len = 0;
    if (!detail::get_le(in, len)) break;
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError("truncated checkpoint name");
    std::uint32_t rank = 0;
    if (!detail::get_le(in, rank) || rank > 8) throw CheckpointError("bad rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape)
      if (!detail::get_le(in, d)) throw CheckpointError("truncated dims for '" + name + "'");
    std::vector<double> data(tensor::numel(shape));
    for (auto& v : data) {
      std::uint64_t bits = 0;
      if (!detail::get_le(in, bits)) throw CheckpointError("truncated data for '" + name + "'");
      v = std::bit_cast<double>(bits);
    }
    out.emplace(name, Tensor::make(std::move(shape), std::move(data), true));
  }
  return out;
}

// Loads values into an existing store; names and shapes must match exactly.
inline void load_checkpoint(ParameterStore& ps, std::istream& in) {
  auto tensors = read_checkpoint(in);
  if (tensors.size() != ps.all().size())
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                          std::to_string(ps.all().size()));
  for (auto& [name, t] : ps.all()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks '" + name + "'");
    if (it->second.shape() != t.shape())
      throw CheckpointError("shape mismatch for '" + name + "': " + tensor::shape_str(it->second.shape()) + " vs " +
                            tensor::shape_str(t.shape()));
    t.mutable_data() = it->second.data();
  }
}

inline void load_checkpoint(ParameterStore& ps, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  load_checkpoint(ps, in);
}

// ---------------------------------------------------------------------------
// optimizers

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | adam
  double lr = 1e-3;
  double clip_norm = 5.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(std::move(cfg)) {
    if (cfg_.kind != "sgd" && cfg_.kind != "adam") throw InvalidConfig("unknown optimizer '" + cfg_.kind + "' (sgd|adam)");
    if (!(cfg_.lr > 0.0)) throw InvalidConfig("learning rate must be positive");
  }

  // One update from the accumulated gradients; returns the pre-clip norm.
  double step(ParameterStore& ps) {
    const double norm = ps.grad_norm();
    if (!std::isfinite(norm)) throw NonFinite("gradient norm is not finite");
    const double factor = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    ++t_;
    for (auto& [name, p] : ps.all()) {
      auto& w = p.mutable_data();
      const auto& g = p.grad();
      if (cfg_.kind == "sgd") {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.lr * factor * g[i];
        continue;
      }
      auto& [m, v] = moments_[name];
      if (m.empty()) m.assign(w.size(), 0.0), v.assign(w.size(), 0.0);
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] * factor;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      }
    }
    return norm;
  }

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// ---------------------------------------------------------------------------
// GRU

struct GruParams {
  Tensor Wz, bz, Wr, br, Wh, bh;  // W*: d x (e + d), b*: d
  std::size_t input_dim() const { return Wz.cols() - Wz.rows(); }
  std::size_t hidden_dim() const { return Wz.rows(); }
};

inline GruParams make_gru(ParameterStore& ps, const std::string& prefix, std::size_t input, std::size_t hidden) {
  GruParams p;
  const std::size_t fan = input + hidden;
  p.Wz = ps.create(prefix + ".Wz", {hidden, fan}, fan);
  p.bz = ps.create(prefix + ".bz", {hidden}, fan);
  p.Wr = ps.create(prefix + ".Wr", {hidden, fan}, fan);
  p.br = ps.create(prefix + ".br", {hidden}, fan);
  p.Wh = ps.create(prefix + ".Wh", {hidden, fan}, fan);
  p.bh = ps.create(prefix + ".bh", {hidden}, fan);
  return p;
}

inline GruParams gru_from(const ParameterStore& ps, const std::string& prefix) {
  return {ps.get(prefix + ".Wz"), ps.get(prefix + ".bz"), ps.get(prefix + ".Wr"),
          ps.get(prefix + ".br"), ps.get(prefix + ".Wh"), ps.get(prefix + ".bh")};
}

namespace detail {

// y = W v + b for W of shape d x n.
inline void affine(const double* W, const double* b, const double* v, double* y, std::size_t d, std::size_t n) {
  for (std::size_t i = 0; i < d; ++i) {
    const double* wi = W + i * n;
    double s = b[i];
    for (std::size_t k = 0; k < n; ++k) s += wi[k] * v[k];
    y[i] = s;
  }
}

}  // namespace detail

// Runs the GRU over the rows of X (N x e) from h0 (d) and returns all hidden
// states H (N x d). One tape node for the whole sequence:
//   z = sig(Wz [x; h] + bz), r = sig(Wr [x; h] + br),
//   c = tanh(Wh [x; r*h] + bh), h' = (1 - z) * h + z * c.
inline Tensor gru_sequence(const Tensor& X, const Tensor& h0, const GruParams& p) {
  tensor::detail::require_rank(X, 2, "gru_sequence");
  tensor::detail::require_rank(h0, 1, "gru_sequence");
  const std::size_t N = X.rows(), e = X.cols(), d = h0.size();
  if (p.hidden_dim() != d || p.input_dim() != e || p.Wr.shape() != p.Wz.shape() || p.Wh.shape() != p.Wz.shape() ||
      p.bz.size() != d || p.br.size() != d || p.bh.size() != d)
    throw ShapeMismatch("gru: input " + tensor::shape_str(X.shape()) + ", state " + tensor::shape_str(h0.shape()) +
                        ", Wz " + tensor::shape_str(p.Wz.shape()));
  const std::size_t n = e + d;
  // per step caches: z, r, c, and the two concatenated inputs
  std::vector<double> H(N * d), Z(N * d), R(N * d), C(N * d), XH(N * n), XRH(N * n);
  std::vector<double> hprev(h0.data());
  for (std::size_t t = 0; t < N; ++t) {
    double* xh = XH.data() + t * n;
    double* xrh = XRH.data() + t * n;
    std::copy_n(X.data().data() + t * e, e, xh);
    std::copy_n(hprev.data(), d, xh + e);
    double* z = Z.data() + t * d;
    double* r = R.data() + t * d;
    double* c = C.data() + t * d;
    detail::affine(p.Wz.data().data(), p.bz.data().data(), xh, z, d, n);
    detail::affine(p.Wr.data().data(), p.br.data().data(), xh, r, d, n);
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = tensor::sigmoid_scalar(z[i]);
      r[i] = tensor::sigmoid_scalar(r[i]);
    }
    std::copy_n(X.data().data() + t * e, e, xrh);
    for (std::size_t i = 0; i < d; ++i) xrh[e + i] = r[i] * hprev[i];
    detail::affine(p.Wh.data().data(), p.bh.data().data(), xrh, c, d, n);
    double* h = H.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      c[i] = std::tanh(c[i]);
      h[i] = (1.0 - z[i]) * hprev[i] + z[i] * c[i];
    }
    std::copy_n(h, d, hprev.data());
  }
  if (!tensor::grad_enabled() || !(X.requires_grad() || h0.requires_grad() || p.Wz.requires_grad() ||
                                   p.Wr.requires_grad() || p.Wh.requires_grad() || p.bz.requires_grad() ||
                                   p.br.requires_grad() || p.bh.requires_grad()))
    return Tensor::make({N, d}, std::move(H));
  std::vector<double> Hcopy = H;
  return tensor::detail::result(
      {N, d}, std::move(Hcopy), {X, h0, p.Wz, p.bz, p.Wr, p.br, p.Wh, p.bh},
      [N, e, d, n, Z = std::move(Z), R = std::move(R), C = std::move(C), XH = std::move(XH),
       XRH = std::move(XRH)](tensor::Node& nd) {
        tensor::Node* pX = nd.parent(0);
        tensor::Node* ph0 = nd.parent(1);
        tensor::Node* pWz = nd.parent(2);
        tensor::Node* pbz = nd.parent(3);
        tensor::Node* pWr = nd.parent(4);
        tensor::Node* pbr = nd.parent(5);
        tensor::Node* pWh = nd.parent(6);
        tensor::Node* pbh = nd.parent(7);
        std::vector<double> dh(d, 0.0), daz(d), dar(d), dah(d), dxrh(n), dxh(n);
        for (std::size_t tt = N; tt-- > 0;) {
          for (std::size_t i = 0; i < d; ++i) dh[i] += nd.grad[tt * d + i];
          const double* z = Z.data() + tt * d;
          const double* r = R.data() + tt * d;
          const double* c = C.data() + tt * d;
          const double* xh = XH.data() + tt * n;
          const double* xrh = XRH.data() + tt * n;
          const double* hp = xh + e;
          std::vector<double> dhp(d);
          for (std::size_t i = 0; i < d; ++i) {
            const double dz = dh[i] * (c[i] - hp[i]);
            const double dc = dh[i] * z[i];
            dhp[i] = dh[i] * (1.0 - z[i]);
            dah[i] = dc * (1.0 - c[i] * c[i]);
            daz[i] = dz * z[i] * (1.0 - z[i]);
          }
          // candidate branch: W_h^T dah -> [dx; d(r*h)]
          std::fill(dxrh.begin(), dxrh.end(), 0.0);
          for (std::size_t i = 0; i < d; ++i) {
            const double g = dah[i];
            if (g == 0.0) continue;
            const double* wi = pWh->value.data() + i * n;
            for (std::size_t k = 0; k < n; ++k) dxrh[k] += g * wi[k];
            if (pWh->requires_grad) {
              double* gw = pWh->grad.data() + i * n;
              for (std::size_t k = 0; k < n; ++k) gw[k] += g * xrh[k];
            }
            if (pbh->requires_grad) pbh->grad[i] += g;
          }
          for (std::size_t i = 0; i < d; ++i) {
            const double drh = dxrh[e + i];
            dhp[i] += drh * r[i];
            dar[i] = drh * hp[i] * r[i] * (1.0 - r[i]);
          }
          // gates: W_z^T daz + W_r^T dar -> [dx; dh]
          std::fill(dxh.begin(), dxh.end(), 0.0);
          for (std::size_t k = 0; k < e; ++k) dxh[k] = dxrh[k];
          for (std::size_t i = 0; i < d; ++i) {
            const double gz = daz[i];
            const double gr = dar[i];
            const double* wz = pWz->value.data() + i * n;
            const double* wr = pWr->value.data() + i * n;
            for (std::size_t k = 0; k < n; ++k) dxh[k] += gz * wz[k] + gr * wr[k];
            if (pWz->requires_grad) {
              double* g = pWz->grad.data() + i * n;
              for (std::size_t k = 0; k < n; ++k) g[k] += gz * xh[k];
            }
            if (pWr->requires_grad) {
              double* g = pWr->grad.data() + i * n;
              for (std::size_t k = 0; k < n; ++k) g[k] += gr * xh[k];
            }
            if (pbz->requires_grad) pbz->grad[i] += gz;
            if (pbr->requires_grad) pbr->grad[i] += gr;
          }
          if (pX->requires_grad)
            for (std::size_t k = 0; k < e; ++k) pX->grad[tt * e + k] += dxh[k];
          for (std::size_t i = 0; i < d; ++i) dh[i] = dhp[i] + dxh[e + i];
        }
        if (ph0->requires_grad)
          for (std::size_t i = 0; i < d; ++i) ph0->grad[i] += dh[i];
      });
}

// One GRU step: h' = GRU(h, x).
inline Tensor gru_cell(const Tensor& h, const Tensor& x, const GruParams& p) {
  return tensor::flatten(gru_sequence(tensor::as_row(x), h, p));
}

struct BiGruOutput {
  Tensor states;  // N x 2d: [forward_k; backward_k] per token
  Tensor final;   // 2d: [forward_N; backward_1]
};

inline BiGruOutput bigru(const Tensor& X, const GruParams& fwd, const GruParams& bwd) {
  const std::size_t d = fwd.hidden_dim();
  Tensor hf = gru_sequence(X, Tensor::zeros({d}), fwd);
  Tensor hb = tensor::reverse_rows(gru_sequence(tensor::reverse_rows(X), Tensor::zeros({bwd.hidden_dim()}), bwd));
  BiGruOutput out;
  out.states = tensor::concat_cols({hf, hb});
  out.final = tensor::concat({tensor::row(hf, X.rows() - 1), tensor::row(hb, 0)});
  return out;
}

// ---------------------------------------------------------------------------
// graph attention

struct GatHead {
  Tensor W;      // f x f'
  Tensor a_src;  // f'
  Tensor a_dst;  // f'
};

inline std::vector<GatHead> make_gat(ParameterStore& ps, const std::string& prefix, std::size_t in, std::size_t out,
                                     int heads) {
  std::vector<GatHead> hs;
  for (int k = 0; k < heads; ++k) {
    const std::string p = prefix + ".head" + std::to_string(k);
    hs.push_back({ps.create(p + ".W", {in, out}, in), ps.create(p + ".a_src", {out}, out),
                  ps.create(p + ".a_dst", {out}, out)});
  }
  return hs;
}

inline std::vector<GatHead> gat_from(const ParameterStore& ps, const std::string& prefix, int heads) {
  std::vector<GatHead> hs;
  for (int k = 0; k < heads; ++k) {
    const std::string p = prefix + ".head" + std::to_string(k);
    hs.push_back({ps.get(p + ".W"), ps.get(p + ".a_src"), ps.get(p + ".a_dst")});
  }
  return hs;
}

// Node features F (n x f), undirected edges as index pairs. Per head:
// e_ij = LeakyReLU(a^T [W z_i; W z_j]) over j in N(i) and i itself,
// alpha = softmax_j, z'_i = sigmoid(sum_j alpha_ij W z_j). Heads are
// concatenated.
inline Tensor gat_layer(const Tensor& F, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                        const std::vector<GatHead>& heads, double slope = 0.2) {
  tensor::detail::require_rank(F, 2, "gat_layer");
  const std::size_t n = F.rows();
  if (n == 0) throw ShapeMismatch("gat_layer: no nodes");
  std::vector<unsigned char> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 1;
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw ShapeMismatch("gat_layer: edge index out of range for " + std::to_string(n) + " nodes");
    mask[a * n + b] = mask[b * n + a] = 1;
  }
  std::vector<Tensor> outs;
  for (const auto& h : heads) {
    if (h.W.rows() != F.cols())
      throw ShapeMismatch("gat_layer: features " + tensor::shape_str(F.shape()) + " vs W " + tensor::shape_str(h.W.shape()));
    Tensor WH = tensor::matmul(F, h.W);  // n x f'
    Tensor src = tensor::flatten(tensor::matmul(WH, tensor::reshape(h.a_src, {h.a_src.size(), 1})));
    Tensor dst = tensor::flatten(tensor::matmul(WH, tensor::reshape(h.a_dst, {h.a_dst.size(), 1})));
    Tensor E = tensor::leaky_relu(tensor::add_outer(src, dst), slope);
    Tensor alpha = tensor::softmax_rows(E, &mask);
    outs.push_back(tensor::sigmoid(tensor::matmul(alpha, WH)));
  }
  return outs.size() == 1 ? outs.front() : tensor::concat_cols(outs);
}

// ---------------------------------------------------------------------------
// trilinear similarity

// S[j][i] = w0 . [g_i; o_j; g_i * o_j] for G (n x d), O (N x d), w0 (3d).
inline Tensor trilinear_similarity(const Tensor& G, const Tensor& O, const Tensor& w0) {
  tensor::detail::require_rank(G, 2, "trilinear_similarity");
  tensor::detail::require_rank(O, 2, "trilinear_similarity");
  const std::size_t d = G.cols();
  if (O.cols() != d || w0.size() != 3 * d)
    throw ShapeMismatch("trilinear_similarity: G " + tensor::shape_str(G.shape()) + ", O " + tensor::shape_str(O.shape()) +
                        ", w0 " + tensor::shape_str(w0.shape()));
  // split w0 with gradient flowing back through reshape + column slices
  Tensor W3 = tensor::reshape(w0, {3, d});
  Tensor wg = tensor::row(W3, 0), wo = tensor::row(W3, 1), wx = tensor::row(W3, 2);
  Tensor gpart = tensor::flatten(tensor::matmul(G, tensor::reshape(wg, {d, 1})));  // n
  Tensor opart = tensor::flatten(tensor::matmul(O, tensor::reshape(wo, {d, 1})));  // N
  Tensor cross = tensor::matmul(tensor::mul_row(O, wx), tensor::transpose(G));     // N x n
  return tensor::add(cross, tensor::add_outer(opart, gpart));
}

}  // namespace twc::nn
