#include "doctest.h"

#include "probe/rng.hpp"
#include "probe/sampler.hpp"
#include "probe/schedule.hpp"

using namespace probe;

TEST_CASE("cosine schedule monotonicity") {
  NoiseSchedule s = NoiseSchedule::cosine_v_prediction(50);
  CHECK(s.alpha_bar[0] > 0.999);
  for (int t = 1; t < s.num_steps; ++t) {
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.sigma[t] > s.sigma[t - 1]);
    CHECK(s.sigma[t] == doctest::Approx(std::sqrt(1.0 - s.alpha_bar[t])).epsilon(1e-12));
  }
}

TEST_CASE("noise_forward endpoints") {
  Rng rng(1);
  Tensor x0 = rng.normal_tensor(Shape{4});
  Tensor eps = rng.normal_tensor(Shape{4});

  NoiseSchedule flow = NoiseSchedule::flow(50);
  Tensor at_one = noise_forward(x0, eps, 1.0, flow);
  for (std::size_t i = 0; i < 4; ++i) CHECK(at_one[i] == doctest::Approx(eps[i]).epsilon(1e-15));
  Tensor at_zero = noise_forward(x0, eps, 0.0, flow);
  for (std::size_t i = 0; i < 4; ++i) CHECK(at_zero[i] == doctest::Approx(x0[i]).epsilon(1e-15));

  // near-clean endpoint of the discrete schedule
  NoiseSchedule vp = NoiseSchedule::cosine_v_prediction(50);
  Tensor at_t0 = noise_forward(x0, eps, 0.0, vp);
  for (std::size_t i = 0; i < 4; ++i) CHECK(at_t0[i] == doctest::Approx(x0[i]).epsilon(1e-2));
}

TEST_CASE("noise_forward scalar arithmetic") {
  // abar = 0.25: xt = 0.5*2 + sqrt(0.75)*4
  NoiseSchedule vp = NoiseSchedule::cosine_v_prediction(2);
  vp.alpha_bar = {1.0, 0.25};
  vp.sigma = {0.0, std::sqrt(0.75)};
  Tensor xt = noise_forward(Tensor::vec({2.0}), Tensor::vec({4.0}), 1.0, vp);
  CHECK(xt[0] == doctest::Approx(0.5 * 2 + std::sqrt(0.75) * 4).epsilon(1e-12));
}

TEST_CASE("recover_clean scalar flow round trip") {
  NoiseSchedule flow = NoiseSchedule::flow(50);
  Tensor x0 = Tensor::vec({3.0}), eps = Tensor::vec({1.0});
  Tensor xt = noise_forward(x0, eps, 0.5, flow);
  CHECK(xt[0] == doctest::Approx(2.0));
  Tensor v = true_velocity(x0, eps, 0.5, flow);
  CHECK(v[0] == doctest::Approx(-2.0));
  Tensor rec = recover_clean(xt, v, 0.5, flow);
  CHECK(rec[0] == doctest::Approx(3.0).epsilon(1e-15));

  // flow at t=0 returns xt unchanged
  Tensor rec0 = recover_clean(xt, v, 0.0, flow);
  CHECK(rec0[0] == xt[0]);
}

TEST_CASE("round-trip identity on random tensors, both parameterizations") {
  Rng rng(42);
  for (ScheduleKind kind : {ScheduleKind::v_prediction, ScheduleKind::flow_matching}) {
    NoiseSchedule sched = kind == ScheduleKind::v_prediction
                              ? NoiseSchedule::cosine_v_prediction(50)
                              : NoiseSchedule::flow(50);
    for (int trial = 0; trial < 200; ++trial) {
      Tensor x0 = rng.normal_tensor(Shape{2, 3});
      Tensor eps = rng.normal_tensor(Shape{2, 3});
      double t = kind == ScheduleKind::v_prediction
                     ? static_cast<double>(rng.uniform_index(50))
                     : rng.uniform();
      Tensor xt = noise_forward(x0, eps, t, sched);
      Tensor v = true_velocity(x0, eps, t, sched);
      Tensor rec = recover_clean(xt, v, t, sched);
      for (std::size_t i = 0; i < x0.size(); ++i)
        CHECK(std::abs(rec[i] - x0[i]) < 1e-9);
    }
  }
}

TEST_CASE("eps recovery inverts the v-prediction identity") {
  Rng rng(3);
  NoiseSchedule vp = NoiseSchedule::cosine_v_prediction(50);
  Tensor x0 = rng.normal_tensor(Shape{6});
  Tensor eps = rng.normal_tensor(Shape{6});
  double t = 31;
  Tensor xt = noise_forward(x0, eps, t, vp);
  Tensor v = true_velocity(x0, eps, t, vp);
  Tensor e = recover_eps_vpred(xt, v, t, vp);
  for (std::size_t i = 0; i < 6; ++i) CHECK(e[i] == doctest::Approx(eps[i]).epsilon(1e-12));
}

TEST_CASE("timestep validation") {
  NoiseSchedule vp = NoiseSchedule::cosine_v_prediction(10);
  CHECK_THROWS_AS(vp.check_t(10.0), ConfigError);
  CHECK_THROWS_AS(vp.check_t(3.5), ConfigError);
  NoiseSchedule flow = NoiseSchedule::flow(10);
  CHECK_THROWS_AS(flow.check_t(1.5), ConfigError);
}

TEST_CASE("CFG guidance identities and linearity") {
  Rng rng(9);
  Tensor vc = rng.normal_tensor(Shape{5});
  Tensor vu = rng.normal_tensor(Shape{5});
  Tensor g0 = guided_velocity(vc, vu, 0.0);
  Tensor g1 = guided_velocity(vc, vu, 1.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(g0[i] == vu[i]);
    CHECK(g1[i] == doctest::Approx(vc[i]).epsilon(1e-15));
  }
  // affine in the guidance scale: g(2s) - g(0) == 2 (g(s) - g(0))
  Tensor ga = guided_velocity(vc, vu, 3.0);
  Tensor gb = guided_velocity(vc, vu, 6.0);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(gb[i] - g0[i] == doctest::Approx(2.0 * (ga[i] - g0[i])).epsilon(1e-12));
}

TEST_CASE("sampler is deterministic under a fixed seed") {
  NoiseSchedule flow = NoiseSchedule::flow(20);
  VelocityFn decay = [](const Tensor& x, double) { return scale(x, 0.5); };
  SamplerConfig cfg;
  cfg.steps = 20;
  cfg.cfg_scale = 1.0;
  Tensor a = sample(decay, decay, cfg, flow, Shape{3, 2}, Rng(42));
  Tensor b = sample(decay, decay, cfg, flow, Shape{3, 2}, Rng(42));
  CHECK(a.data == b.data);
  Tensor c = sample(decay, decay, cfg, flow, Shape{3, 2}, Rng(43));
  CHECK(a.data != c.data);
}

TEST_CASE("flow sampler integrates an exact field back to the data point") {
  // with v(x,t) = eps_hat(x,t) - x0_target the exact solution lands on x0
  Tensor x0 = Tensor::vec({1.0, -2.0, 0.5});
  NoiseSchedule flow = NoiseSchedule::flow(400);
  VelocityFn exact = [&](const Tensor& x, double t) {
    // along the linear path x = (1-t)x0 + t eps, the constant field eps-x0
    // equals (x - x0)/t
    Tensor v = sub(x, x0);
    return scale(v, 1.0 / std::max(t, 1e-9));
  };
  SamplerConfig cfg;
  cfg.steps = 400;
  cfg.cfg_scale = 1.0;
  Tensor out = sample(exact, exact, cfg, flow, Shape{3}, Rng(7));
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(x0[i]).epsilon(1e-2));
}
