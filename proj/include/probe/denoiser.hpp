#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "probe/digest.hpp"
#include "probe/rng.hpp"
#include "probe/schedule.hpp"
#include "probe/tensor.hpp"
#include "probe/text_encoder.hpp"

namespace probe {

// Video latents are Tensors of shape {T, H, W, C}; the denoiser views them
// as T rows of a flattened frame vector of length H*W*C.
struct ModelConfig {
  std::size_t frames = 8;
  std::size_t height = 4;
  std::size_t width = 4;
  std::size_t channels = 2;
  std::size_t embed_dim = 16;  // text embedding d
  std::size_t cond_dim = 16;   // condition d_c
  std::size_t hidden = 32;
  std::size_t attn_dim = 16;
  ScheduleKind kind = ScheduleKind::v_prediction;
  int num_steps = 50;

  std::size_t frame_dim() const { return height * width * channels; }
  Shape latent_shape() const { return {frames, height, width, channels}; }

  NoiseSchedule schedule() const {
    return kind == ScheduleKind::v_prediction ? NoiseSchedule::cosine_v_prediction(num_steps)
                                              : NoiseSchedule::flow(num_steps);
  }
};

inline void require_latent(const ModelConfig& cfg, const Tensor& x, const char* what) {
  if (x.shape != cfg.latent_shape())
    throw ShapeError(std::string(what) + ": expected latent shape " +
                     shape_str(cfg.latent_shape()) + ", got " + shape_str(x.shape));
}

struct DenoiserWeights {
  Tensor w1, b1;  // spatial affine: hidden x F, hidden
  Tensor ut;      // time embedding map: hidden x 4
  Tensor uc;      // condition injection: hidden x d_c
  Tensor wq, wk;  // temporal attention: attn x hidden
  Tensor wv;      // temporal attention values: hidden x hidden
  Tensor w2, b2;  // output projection: F x hidden, F

  template <typename F>
  void for_each(F&& f) {
    f("w1", w1); f("b1", b1); f("ut", ut); f("uc", uc);
    f("wq", wq); f("wk", wk); f("wv", wv); f("w2", w2); f("b2", b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("w1", w1); f("b1", b1); f("ut", ut); f("uc", uc);
    f("wq", wq); f("wk", wk); f("wv", wv); f("w2", w2); f("b2", b2);
  }

  static DenoiserWeights zeros_like(const ModelConfig& cfg) {
    const std::size_t F = cfg.frame_dim(), H = cfg.hidden, A = cfg.attn_dim, D = cfg.cond_dim;
    DenoiserWeights w;
    w.w1 = Tensor(Shape{H, F});
    w.b1 = Tensor(Shape{H});
    w.ut = Tensor(Shape{H, 4});
    w.uc = Tensor(Shape{H, D});
    w.wq = Tensor(Shape{A, H});
    w.wk = Tensor(Shape{A, H});
    w.wv = Tensor(Shape{H, H});
    w.w2 = Tensor(Shape{F, H});
    w.b2 = Tensor(Shape{F});
    return w;
  }
};

// Miniature conditioned spatiotemporal velocity network: per-frame affine +
// tanh, one softmax attention layer over the frame axis, linear readout.
struct DenoiserModel {
  ModelConfig cfg;
  DenoiserWeights w;
  NoiseSchedule sched;
  bool frozen = false;
  std::string provenance = "base";

  static DenoiserModel init(const ModelConfig& cfg, Rng rng) {
    DenoiserModel m;
    m.cfg = cfg;
    m.sched = cfg.schedule();
    m.w = DenoiserWeights::zeros_like(cfg);
    std::uint64_t stream = 0;
    m.w.for_each([&](const char*, Tensor& t) {
      Rng r = rng.split(++stream);
      const double fan_in = t.shape.size() == 2 ? static_cast<double>(t.shape[1]) : 1.0;
      const double s = t.shape.size() == 2 ? 1.0 / std::sqrt(fan_in) : 0.0;
      for (auto& x : t.data) x = s * r.normal();
    });
    return m;
  }

  std::string weight_digest() const {
    Digest d;
    w.for_each([&](const char* name, const Tensor& t) {
      d.str(name);
      d.tensor(t);
    });
    return d.hex();
  }

  void require_unfrozen(const char* what) const {
    if (frozen) throw Error(std::string(what) + ": model is frozen");
  }
};

inline Tensor time_features(double t_norm) {
  return Tensor::vec({1.0, t_norm, std::sin(2.0 * 3.14159265358979323846 * t_norm),
                      std::cos(2.0 * 3.14159265358979323846 * t_norm)});
}

struct ForwardCache {
  Tensor phi;                         // time features
  std::vector<Tensor> u, pre, a;      // per-frame input / pre-activation / activation
  std::vector<Tensor> q, k, vv, m;    // attention tensors
  Tensor attn;                        // T x T row-softmax weights
};

inline Tensor frame_view(const Tensor& x, std::size_t j, std::size_t F) {
  Tensor f(Shape{F});
  for (std::size_t i = 0; i < F; ++i) f[i] = x.data[j * F + i];
  return f;
}

inline Tensor denoise_forward(const DenoiserModel& model, const Tensor& xt, const Condition& cond,
                              double t, ForwardCache* cache = nullptr) {
  const ModelConfig& cfg = model.cfg;
  require_latent(cfg, xt, "denoise_forward");
  if (cond.shape != Shape{cfg.cond_dim})
    throw ShapeError("denoise_forward: condition dim " + shape_str(cond.shape) + " != " +
                     std::to_string(cfg.cond_dim));
  model.sched.check_t(t);

  const std::size_t T = cfg.frames, F = cfg.frame_dim(), H = cfg.hidden, A = cfg.attn_dim;
  const Tensor phi = time_features(model.sched.t_norm(t));
  const Tensor inj_t = matmul(model.w.ut, phi);
  const Tensor inj_c = matmul(model.w.uc, cond);

  std::vector<Tensor> u(T), pre(T), a(T), q(T), k(T), vv(T), m(T);
  for (std::size_t j = 0; j < T; ++j) {
    u[j] = frame_view(xt, j, F);
    pre[j] = matmul(model.w.w1, u[j]);
    for (std::size_t i = 0; i < H; ++i) pre[j][i] += model.w.b1[i] + inj_t[i] + inj_c[i];
    a[j] = pre[j];
    for (auto& x : a[j].data) x = std::tanh(x);
    ensure_finite(a[j], "denoise_forward layer spatial, frame " + std::to_string(j));
    q[j] = matmul(model.w.wq, a[j]);
    k[j] = matmul(model.w.wk, a[j]);
    vv[j] = matmul(model.w.wv, a[j]);
  }

  // softmax attention over the frame axis
  const double inv_sqrt_a = 1.0 / std::sqrt(static_cast<double>(A));
  Tensor attn(Shape{T, T});
  for (std::size_t j = 0; j < T; ++j) {
    double mx = -1e300;
    for (std::size_t i = 0; i < T; ++i) {
      attn.at2(j, i) = dot(q[j], k[i]) * inv_sqrt_a;
      mx = std::max(mx, attn.at2(j, i));
    }
    double z = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      attn.at2(j, i) = std::exp(attn.at2(j, i) - mx);
      z += attn.at2(j, i);
    }
    for (std::size_t i = 0; i < T; ++i) attn.at2(j, i) /= z;
  }
  ensure_finite(attn, "denoise_forward layer temporal_attention");

  Tensor out(cfg.latent_shape());
  for (std::size_t j = 0; j < T; ++j) {
    m[j] = Tensor(Shape{H});
    for (std::size_t i = 0; i < T; ++i) axpy(m[j], attn.at2(j, i), vv[i]);
    Tensor g = add(a[j], m[j]);
    Tensor y = matmul(model.w.w2, g);
    for (std::size_t i = 0; i < F; ++i) out.data[j * F + i] = y[i] + model.w.b2[i];
  }
  ensure_finite(out, "denoise_forward layer output");

  if (cache) {
    cache->phi = phi;
    cache->u = std::move(u);
    cache->pre = std::move(pre);
    cache->a = std::move(a);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->vv = std::move(vv);
    cache->m = std::move(m);
    cache->attn = std::move(attn);
  }
  return out;
}

struct BackwardResult {
  Tensor grad_cond;                          // d loss / d condition
  std::optional<DenoiserWeights> grad_weights;  // only when requested (unfrozen model)
};

// Hand-written reverse pass matching denoise_forward exactly; checked against
// the finite-difference oracle in the test suite.
inline BackwardResult denoise_backward(const DenoiserModel& model, const Tensor& xt,
                                       const Condition& cond, double t, const Tensor& upstream,
                                       bool want_weights = false) {
  if (want_weights && model.frozen)
    throw Error("denoise_backward: weight gradients requested on a frozen model");
  require_latent(model.cfg, upstream, "denoise_backward(upstream)");

  ForwardCache cc;
  denoise_forward(model, xt, cond, t, &cc);

  const ModelConfig& cfg = model.cfg;
  const std::size_t T = cfg.frames, F = cfg.frame_dim(), H = cfg.hidden, A = cfg.attn_dim;
  const double inv_sqrt_a = 1.0 / std::sqrt(static_cast<double>(A));

  DenoiserWeights gw = DenoiserWeights::zeros_like(cfg);
  std::vector<Tensor> da(T, Tensor(Shape{H})), dm(T), dvv(T, Tensor(Shape{H}));
  std::vector<Tensor> dq(T, Tensor(Shape{A})), dk(T, Tensor(Shape{A}));

  // output projection and residual
  for (std::size_t j = 0; j < T; ++j) {
    Tensor dy = frame_view(upstream, j, F);
    Tensor g = add(cc.a[j], cc.m[j]);
    outer_acc(gw.w2, dy, g);
    for (std::size_t i = 0; i < F; ++i) gw.b2[i] += dy[i];
    Tensor dg = matvec_t(model.w.w2, dy);
    da[j] = dg;
    dm[j] = dg;
  }

  // attention: m_j = sum_i attn(j,i) vv_i
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t i = 0; i < T; ++i) axpy(dvv[i], cc.attn.at2(j, i), dm[j]);
  for (std::size_t j = 0; j < T; ++j) {
    Tensor dA(Shape{T});
    for (std::size_t i = 0; i < T; ++i) dA[i] = dot(dm[j], cc.vv[i]);
    double rowdot = 0.0;
    for (std::size_t i = 0; i < T; ++i) rowdot += cc.attn.at2(j, i) * dA[i];
    for (std::size_t i = 0; i < T; ++i) {
      const double ds = cc.attn.at2(j, i) * (dA[i] - rowdot) * inv_sqrt_a;
      axpy(dq[j], ds, cc.k[i]);
      axpy(dk[i], ds, cc.q[j]);
    }
  }
  for (std::size_t j = 0; j < T; ++j) {
    outer_acc(gw.wq, dq[j], cc.a[j]);
    outer_acc(gw.wk, dk[j], cc.a[j]);
    outer_acc(gw.wv, dvv[j], cc.a[j]);
    da[j] = add(da[j], matvec_t(model.w.wq, dq[j]));
    da[j] = add(da[j], matvec_t(model.w.wk, dk[j]));
    da[j] = add(da[j], matvec_t(model.w.wv, dvv[j]));
  }

  // spatial stack and injections
  Tensor grad_cond(Shape{cfg.cond_dim});
  for (std::size_t j = 0; j < T; ++j) {
    Tensor dpre(Shape{H});
    for (std::size_t i = 0; i < H; ++i)
      dpre[i] = da[j][i] * (1.0 - cc.a[j][i] * cc.a[j][i]);
    outer_acc(gw.w1, dpre, cc.u[j]);
    for (std::size_t i = 0; i < H; ++i) gw.b1[i] += dpre[i];
    outer_acc(gw.ut, dpre, cc.phi);
    outer_acc(gw.uc, dpre, cond);
    grad_cond = add(grad_cond, matvec_t(model.w.uc, dpre));
  }

  BackwardResult res;
  res.grad_cond = std::move(grad_cond);
  if (want_weights) res.grad_weights = std::move(gw);
  return res;
}

// Latent codec for Algorithm-style reference encoding. identity passes
// latents through; fixed_linear applies an invertible per-frame projection
// with a stored inverse.
struct LatentCodec {
  enum class Mode { identity, fixed_linear };
  Mode mode = Mode::identity;
  Tensor proj;      // F x F
  Tensor proj_inv;  // F x F

  static LatentCodec identity() { return LatentCodec{}; }

  static LatentCodec fixed_linear(std::size_t frame_dim, Rng rng) {
    LatentCodec c;
    c.mode = Mode::fixed_linear;
    c.proj = Tensor(Shape{frame_dim, frame_dim});
    for (std::size_t i = 0; i < frame_dim; ++i) c.proj.at2(i, i) = 1.0;
    for (auto& x : c.proj.data) x += 0.08 * rng.normal();
    c.proj_inv = invert(c.proj);
    return c;
  }

  static Tensor invert(const Tensor& a) {
    const std::size_t n = a.shape[0];
    Tensor aug(Shape{n, 2 * n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) aug.at2(i, j) = a.at2(i, j);
      aug.at2(i, n + i) = 1.0;
    }
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < n; ++r)
        if (std::abs(aug.at2(r, col)) > std::abs(aug.at2(piv, col))) piv = r;
      if (std::abs(aug.at2(piv, col)) < 1e-12) throw NumericError("codec projection is singular");
      if (piv != col)
        for (std::size_t j = 0; j < 2 * n; ++j) std::swap(aug.at2(piv, j), aug.at2(col, j));
      const double d = aug.at2(col, col);
      for (std::size_t j = 0; j < 2 * n; ++j) aug.at2(col, j) /= d;
      for (std::size_t r = 0; r < n; ++r) {
        if (r == col) continue;
        const double f = aug.at2(r, col);
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < 2 * n; ++j) aug.at2(r, j) -= f * aug.at2(col, j);
      }
    }
    Tensor inv(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) inv.at2(i, j) = aug.at2(i, n + j);
    return inv;
  }

  Tensor apply(const Tensor& video, const Tensor& mat) const {
    if (video.shape.size() != 4) throw ShapeError("codec: expected a {T,H,W,C} latent");
    const std::size_t F = video.size() / video.shape[0];
    if (mat.shape != Shape{F, F})
      throw ShapeError("codec: frame dim " + std::to_string(F) + " does not match projection");
    Tensor out(video.shape);
    for (std::size_t j = 0; j < video.shape[0]; ++j) {
      Tensor y = matmul(mat, frame_view(video, j, F));
      for (std::size_t i = 0; i < F; ++i) out.data[j * F + i] = y[i];
    }
    return out;
  }

  Tensor encode(const Tensor& video) const {
    if (mode == Mode::identity) return video;
    return apply(video, proj);
  }
  Tensor decode(const Tensor& video) const {
    if (mode == Mode::identity) return video;
    return apply(video, proj_inv);
  }
};

}  // namespace probe
