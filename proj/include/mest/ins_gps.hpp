#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

#include "mest/compound.hpp"
#include "mest/euclidean.hpp"
#include "mest/quaternion.hpp"
#include "mest/random.hpp"
#include "mest/ukf.hpp"

namespace mest::ins {

/// INS state: position (m), orientation, velocity (m/s); the colored-noise
/// variant appends a GPS bias (m) following a first-order Gauss-Markov model.
using State = Compound<Vec3, QuatRot, Vec3>;
using ColoredState = Compound<Vec3, QuatRot, Vec3, Vec3>;

inline constexpr int kPos = 0;
inline constexpr int kOrient = 1;
inline constexpr int kVel = 2;
inline constexpr int kBias = 3;

struct NoiseConfig {
  double dt = 0.01;                           // IMU interval (s), 100 Hz
  double gyro_noise = 7.615435494667714e-07;  // (0.05 deg/sqrt(s))^2 in rad^2/s
  double accel_noise = 4e-6;                  // (2 mm/s^1.5)^2 in m^2/s^3
  double gps_sigma = 0.75;                    // GPS white noise std (m)
  int gps_every = 25;                         // IMU steps per GPS fix (4 Hz)
  bool colored = false;
  double bias_var = 5.0;     // stationary GPS bias variance sigma_b^2 (m^2)
  double bias_time =1800.0;  // bias correlation time T (s)
  Eigen::Vector3d gravity = Eigen::Vector3d(0.0, 0.0, -9.81);
};

/// One Euler step of the strapdown model. The position advances with the
/// pre-update velocity and the specific force is rotated by the pre-update
/// orientation.
inline State ins_process(const State& s, const Eigen::Vector3d& accel,
                         const Eigen::Vector3d& gyro, const NoiseConfig& cfg) {
  State next;
  next.get<kOrient>() = s.get<kOrient>().boxplus(gyro * cfg.dt);
  next.get<kVel>() = Vec3(s.get<kVel>().value() +
                          (s.get<kOrient>().rotate(accel) + cfg.gravity) * cfg.dt);
  next.get<kPos>() = Vec3(s.get<kPos>().value() + s.get<kVel>().value() * cfg.dt);
  return next;
}

inline ColoredState ins_process(const ColoredState& s, const Eigen::Vector3d& accel,
                                const Eigen::Vector3d& gyro,
                                const NoiseConfig& cfg) {
  ColoredState next;
  next.get<kOrient>() = s.get<kOrient>().boxplus(gyro * cfg.dt);
  next.get<kVel>() = Vec3(s.get<kVel>().value() +
                          (s.get<kOrient>().rotate(accel) + cfg.gravity) * cfg.dt);
  next.get<kPos>() = Vec3(s.get<kPos>().value() + s.get<kVel>().value() * cfg.dt);
  next.get<kBias>() =
      Vec3(std::exp(-cfg.dt / cfg.bias_time) * s.get<kBias>().value());
  return next;
}

/// R_t = dt * diag(0, 0, 0, gyro, gyro, gyro, accel, accel, accel), plus the
/// Gauss-Markov stationarity-preserving bias block for the colored variant.
template <Manifold S>
typename Belief<S>::Cov process_noise_cov(const NoiseConfig& cfg) {
  typename Belief<S>::Cov cov = Belief<S>::Cov::Zero();
  for (int i = 0; i < 3; ++i) {
    cov(3 + i, 3 + i) = cfg.gyro_noise * cfg.dt;
    cov(6 + i, 6 + i) = cfg.accel_noise * cfg.dt;
  }
  if constexpr (S::kDof == 12) {
    const double q = cfg.bias_var *
                     (1.0 - std::exp(-2.0 * cfg.dt / cfg.bias_time));
    for (int i = 0; i < 3; ++i) cov(9 + i, 9 + i) = q;
  }
  return cov;
}

inline Eigen::Vector3d gps_measurement(const State& s) {
  return s.get<kPos>().value();
}

inline Eigen::Vector3d gps_measurement(const ColoredState& s) {
  return s.get<kPos>().value() + s.get<kBias>().value();
}

struct ImuSample {
  double t = 0.0;
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();
};

struct GpsSample {
  double t = 0.0;
  int step = 0;  // index into the state grid
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
};

/// Ground truth plus sensor streams. States sit on the IMU grid t_0..t_N;
/// IMU samples cover [t_k, t_k+1); GPS timestamps are a subset of the grid.
struct SimLog {
  std::vector<double> times;
  std::vector<State> truth;
  std::vector<Eigen::Vector3d> true_bias;  // per grid point, colored only
  std::vector<ImuSample> imu;
  std::vector<GpsSample> gps;
  std::uint64_t seed = 0;
};

/// Figure-eight trajectory with an embedded vertical undulation; the body
/// rolls continuously about its forward axis and the yaw oscillates. Progress
/// along the path follows a quintic ease-in/ease-out, so the vehicle starts
/// and ends at rest at (0, 0, 0) and the path closes exactly.
struct TrajectoryConfig {
  double duration = 120.0;
  double dt = 0.01;
  double laps = 1.0;
  double lobe_x = 30.0;     // m
  double lobe_y = 15.0;     // m
  double height = 6.0;      // m
  double yaw_amp = 0.5;     // rad
  double roll_turns = 1.0;  // body rolls per lap
  double ramp = 10.0;       // s of speed-up / slow-down at either end
};

namespace detail {

struct TruthSample {
  State state;
  Eigen::Vector3d accel;  // body-frame specific force
  Eigen::Vector3d gyro;   // body-frame angular rate
};

// Path progress: quintic-smoothstep speed ramps into a constant cruise and
// back to rest; C^2 throughout, total progress 1.
struct Progress {
  double s = 0.0, s1 = 0.0, s2 = 0.0;  // value and time derivatives
};

inline Progress progress_at(double t, double duration, double ramp) {
  Progress p;
  if (duration <= 0.0) return p;
  const double tau = std::clamp(ramp, 1e-9, duration / 2.0);
  const double cruise = 1.0 / (duration - tau);
  const auto q = [](double u) { return ((6.0 * u - 15.0) * u + 10.0) * u * u * u; };
  const auto q1 = [](double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); };
  const auto qint = [](double u) {  // integral of q from 0
    return ((u - 3.0) * u + 2.5) * u * u * u * u;
  };
  if (t <= tau) {
    const double u = t / tau;
    p.s = cruise * tau * qint(u);
    p.s1 = cruise * q(u);
    p.s2 = cruise * q1(u) / tau;
  } else if (t < duration - tau) {
    p.s = cruise * (tau / 2.0 + (t - tau));
    p.s1 = cruise;
    p.s2 = 0.0;
  } else {
    const double u = (duration - t) / tau;
    p.s = cruise * (duration - tau - tau * qint(u));
    p.s1 = cruise * q(u);
    p.s2 = -cruise * q1(u) / tau;
  }
  return p;
}

inline TruthSample truth_at(const TrajectoryConfig& tc, const NoiseConfig& nc,
                            double t) {
  const Progress pr = progress_at(t, tc.duration, tc.ramp);
  const double total = 2.0 * kPi * tc.laps;
  const double th = total * pr.s;
  const double th1 = total * pr.s1;
  const double th2 = total * pr.s2;

  const Eigen::Vector3d p(tc.lobe_x * std::sin(th), tc.lobe_y * std::sin(2.0 * th),
                          tc.height * std::sin(th) * std::sin(th));
  const Eigen::Vector3d dp(tc.lobe_x * std::cos(th),
                           2.0 * tc.lobe_y * std::cos(2.0 * th),
                           tc.height * std::sin(2.0 * th));
  const Eigen::Vector3d ddp(-tc.lobe_x * std::sin(th),
                            -4.0 * tc.lobe_y * std::sin(2.0 * th),
                            2.0 * tc.height * std::cos(2.0 * th));
  const Eigen::Vector3d vel = dp * th1;
  const Eigen::Vector3d acc_world = ddp * th1 * th1 + dp * th2;

  const double yaw = tc.yaw_amp * std::sin(th);
  const double yaw_rate = tc.yaw_amp * std::cos(th) * th1;
  const double roll = tc.roll_turns * th;
  const double roll_rate = tc.roll_turns * th1;

  const Eigen::Matrix3d rot_x =
      Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix() * rot_x;

  TruthSample out;
  out.state = State(Vec3(p), QuatRot(Eigen::Quaterniond(rot)), Vec3(vel));
  out.gyro = roll_rate * Eigen::Vector3d::UnitX() +
             yaw_rate * rot_x.transpose() * Eigen::Vector3d::UnitZ();
  out.accel = rot.transpose() * (acc_world - nc.gravity);
  return out;
}

}  // namespace detail

/// Noise-free ground truth: analytic states on the IMU grid and the IMU
/// readings consistent with them. A rate sensor reports its average over the
/// sample interval, not an instantaneous value, so the reading covering
/// [t_k, t_k+dt) is derived from the interval's endpoint states (the exact
/// increment expressed in the strapdown model's discretization):
///   w_k = log(R_k^T R_k+1) / dt,   a_k = R_k^T ((v_k+1 - v_k)/dt - gravity).
inline SimLog generate_trajectory(const TrajectoryConfig& tc,
                                  const NoiseConfig& nc) {
  SimLog log;
  const int steps =
      tc.duration > 0.0 ? static_cast<int>(std::round(tc.duration / tc.dt)) : 0;
  log.times.reserve(steps + 1);
  log.truth.reserve(steps + 1);
  log.imu.reserve(steps);
  for (int k = 0; k <= steps; ++k) {
    log.times.push_back(k * tc.dt);
    log.truth.push_back(detail::truth_at(tc, nc, k * tc.dt).state);
  }
  for (int k = 0; k < steps; ++k) {
    const State& cur = log.truth[k];
    const State& next = log.truth[k + 1];
    ImuSample s;
    s.t = log.times[k];
    s.gyro = next.get<kOrient>().boxminus(cur.get<kOrient>()) / tc.dt;
    s.accel = cur.get<kOrient>().inverse().rotate(
        (next.get<kVel>().value() - cur.get<kVel>().value()) / tc.dt -
        nc.gravity);
    log.imu.push_back(s);
  }
  return log;
}

/// Adds sensor noise to a ground-truth log: white noise of per-sample
/// variance density/dt on the IMU, white GPS noise of sigma_p, and (when
/// colored) a stationary first-order Gauss-Markov GPS bias.
inline SimLog simulate_sensors(const SimLog& truth, const NoiseConfig& cfg,
                               std::uint64_t seed) {
  SimLog log = truth;
  log.seed = seed;
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);

  const double gyro_std = std::sqrt(cfg.gyro_noise / cfg.dt);
  const double accel_std = std::sqrt(cfg.accel_noise / cfg.dt);
  for (auto& s : log.imu) {
    for (int i = 0; i < 3; ++i) s.gyro[i] += gyro_std * n(rng);
    for (int i = 0; i < 3; ++i) s.accel[i] += accel_std * n(rng);
  }

  if (cfg.colored) {
    log.true_bias.resize(log.times.size());
    const double decay = std::exp(-cfg.dt / cfg.bias_time);
    const double kick =
        std::sqrt(cfg.bias_var * (1.0 - decay * decay));
    Eigen::Vector3d b(std::sqrt(cfg.bias_var) * n(rng),
                      std::sqrt(cfg.bias_var) * n(rng),
                      std::sqrt(cfg.bias_var) * n(rng));
    for (std::size_t k = 0; k < log.times.size(); ++k) {
      log.true_bias[k] = b;
      b = decay * b + kick * Eigen::Vector3d(n(rng), n(rng), n(rng));
    }
  }

  log.gps.clear();
  const int steps = static_cast<int>(log.imu.size());
  for (int k = cfg.gps_every; k <= steps; k += cfg.gps_every) {
    GpsSample g;
    g.t = log.times[k];
    g.step = k;
    g.pos = log.truth[k].get<kPos>().value();
    if (cfg.colored) g.pos += log.true_bias[k];
    for (int i = 0; i < 3; ++i) g.pos[i] += cfg.gps_sigma * n(rng);
    log.gps.push_back(g);
  }
  return log;
}

/// One predict per IMU sample, one update per GPS sample, per the log's
/// timestamps. Returns the belief at every grid point (index 0 = initial).
template <Manifold FS>
std::vector<Belief<FS>> run_filter(const SimLog& log, const NoiseConfig& cfg,
                                   const Belief<FS>& initial) {
  const auto process_noise = process_noise_cov<FS>(cfg);
  const Eigen::Matrix3d gps_noise =
      cfg.gps_sigma * cfg.gps_sigma * Eigen::Matrix3d::Identity();

  std::vector<Belief<FS>> trace;
  trace.reserve(log.times.size());
  trace.push_back(initial);

  Ukf<FS> filter(initial);
  std::size_t next_gps = 0;
  for (std::size_t k = 0; k < log.imu.size(); ++k) {
    const auto& u = log.imu[k];
    try {
      filter.predict([&](const FS& s) { return ins_process(s, u.accel, u.gyro, cfg); },
                     process_noise);
      if (next_gps < log.gps.size() &&
          log.gps[next_gps].step == static_cast<int>(k) + 1) {
        filter.update(
            Vec3(log.gps[next_gps].pos),
            [](const FS& s) { return Vec3(gps_measurement(s)); }, gps_noise);
        ++next_gps;
      }
    } catch (const Error& e) {
      throw Error("t=" + std::to_string(log.times[k + 1]) + ": " + e.what());
    }
    trace.push_back(filter.belief());
  }
  return trace;
}

/// Default initial belief per the worked example: default-constructed state,
/// covariance 0.001 * I (bias block sigma_b^2 when colored).
template <Manifold FS>
Belief<FS> default_initial_belief(const NoiseConfig& cfg) {
  Belief<FS> b;
  b.cov = 0.001 * Belief<FS>::Cov::Identity();
  if constexpr (FS::kDof == 12) {
    for (int i = 0; i < 3; ++i) b.cov(9 + i, 9 + i) = cfg.bias_var;
  }
  return b;
}

/// Per-time Monte Carlo statistics against ground truth.
struct EvalReport {
  std::vector<double> times;
  std::vector<double> rms_pos, rms_orient, rms_vel;
  std::vector<double> nees;                // averaged over runs
  std::vector<std::vector<double>> nmee;   // [component][time]
  double avg_pos = 0.0, avg_orient = 0.0, avg_vel = 0.0;
  int runs = 0;
  int state_dof = 0;
};

namespace detail {

template <Manifold FS>
FS truth_state(const SimLog& log, std::size_t k);

template <>
inline State truth_state<State>(const SimLog& log, std::size_t k) {
  return log.truth[k];
}

template <>
inline ColoredState truth_state<ColoredState>(const SimLog& log, std::size_t k) {
  const State& s = log.truth[k];
  const Eigen::Vector3d bias =
      log.true_bias.empty() ? Eigen::Vector3d::Zero() : log.true_bias[k];
  return ColoredState(s.get<kPos>(), s.get<kOrient>(), s.get<kVel>(), Vec3(bias));
}

struct RunSummary {
  // Per grid point: squared block errors, NEES, and per-component
  // normalized errors.
  std::vector<double> pos2, orient2, vel2, nees;
  std::vector<std::vector<double>> nmee;
};

template <Manifold FS>
RunSummary summarize_run(const std::vector<Belief<FS>>& trace,
                         const SimLog& log) {
  if (trace.size() != log.times.size()) {
    throw ContractViolation("trace length does not match trajectory length");
  }
  const std::size_t n = trace.size();
  RunSummary s;
  s.pos2.resize(n);
  s.orient2.resize(n);
  s.vel2.resize(n);
  s.nees.resize(n);
  s.nmee.assign(FS::kDof, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const FS truth = truth_state<FS>(log, k);
    const typename FS::Tangent err = trace[k].mean.boxminus(truth);
    s.pos2[k] = err.template segment<3>(0).squaredNorm();
    s.orient2[k] = err.template segment<3>(3).squaredNorm();
    s.vel2[k] = err.template segment<3>(6).squaredNorm();
    const auto& cov = trace[k].cov;
    const Eigen::LDLT<typename Belief<FS>::Cov> ldlt(cov);
    if (ldlt.info() != Eigen::Success) {
      throw Error("singular belief covariance at t=" +
                  std::to_string(log.times[k]));
    }
    s.nees[k] = err.dot(ldlt.solve(err));
    for (int c = 0; c < FS::kDof; ++c) {
      s.nmee[c][k] = err[c] / std::sqrt(cov(c, c));
    }
  }
  return s;
}

inline int thread_budget() {
  if (const char* env = std::getenv("MF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace detail

namespace detail {

template <int Dof>
EvalReport aggregate(const std::vector<RunSummary>& summaries,
                     const std::vector<double>& times) {
  EvalReport rep;
  rep.times = times;
  rep.runs = static_cast<int>(summaries.size());
  rep.state_dof = Dof;
  const std::size_t n = times.size();
  const double inv_runs = 1.0 / static_cast<double>(summaries.size());
  rep.rms_pos.assign(n, 0.0);
  rep.rms_orient.assign(n, 0.0);
  rep.rms_vel.assign(n, 0.0);
  rep.nees.assign(n, 0.0);
  rep.nmee.assign(Dof, std::vector<double>(n, 0.0));
  for (const auto& s : summaries) {
    for (std::size_t k = 0; k < n; ++k) {
      rep.rms_pos[k] += s.pos2[k];
      rep.rms_orient[k] += s.orient2[k];
      rep.rms_vel[k] += s.vel2[k];
      rep.nees[k] += s.nees[k];
      for (int c = 0; c < Dof; ++c) rep.nmee[c][k] += s.nmee[c][k];
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    rep.rms_pos[k] = std::sqrt(rep.rms_pos[k] * inv_runs);
    rep.rms_orient[k] = std::sqrt(rep.rms_orient[k] * inv_runs);
    rep.rms_vel[k] = std::sqrt(rep.rms_vel[k] * inv_runs);
    rep.nees[k] *= inv_runs;
    for (int c = 0; c < Dof; ++c) rep.nmee[c][k] *= inv_runs;
  }
  const auto mean_of = [n](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
  };
  rep.avg_pos = mean_of(rep.rms_pos);
  rep.avg_orient = mean_of(rep.rms_orient);
  rep.avg_vel = mean_of(rep.rms_vel);
  return rep;
}

}  // namespace detail

/// Aggregates per-run filter traces into the evaluation report.
template <Manifold FS>
EvalReport evaluate(const std::vector<std::vector<Belief<FS>>>& traces,
                    const SimLog& truth) {
  std::vector<detail::RunSummary> summaries;
  summaries.reserve(traces.size());
  for (const auto& tr : traces) {
    summaries.push_back(detail::summarize_run(tr, truth));
  }
  return detail::aggregate<FS::kDof>(summaries, truth.times);
}

/// Runs `runs` independent simulations with seeds base_seed + run index and
/// aggregates the evaluation. Each run perturbs the initial belief mean by a
/// draw from the initial covariance so the estimation error is distributed
/// as claimed from the first step on. Runs execute in parallel up to
/// MF_THREADS; aggregation order is fixed by run index.
template <Manifold FS>
EvalReport monte_carlo(const SimLog& truth, const NoiseConfig& cfg, int runs,
                       std::uint64_t base_seed) {
  std::vector<detail::RunSummary> summaries(runs);
  const int threads = std::min(detail::thread_budget(), runs);

  const auto run_one = [&](int r) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
    SimLog log = simulate_sensors(truth, cfg, seed);
    Belief<FS> init = default_initial_belief<FS>(cfg);
    init.mean = detail::truth_state<FS>(log, 0);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    Gaussian<FS> g{init.mean, init.cov};
    init.mean = sample(g, rng);
    const auto trace = run_filter(log, cfg, init);
    summaries[r] = detail::summarize_run(trace, log);
  };

  if (threads <= 1) {
    for (int r = 0; r < runs; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < runs; r = next.fetch_add(1)) {
          run_one(r);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // Fold in run order (deterministic regardless of thread count).
  return detail::aggregate<FS::kDof>(summaries, truth.times);
}

}  // namespace mest::ins
