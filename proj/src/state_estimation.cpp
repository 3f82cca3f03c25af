#include "ecodrive/state_estimation.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace ecodrive::estimation {

namespace {

struct SigmaWeights {
  double lambda;
  double wm0, wc0, wi;
};

SigmaWeights weights_for(int n, const UkfConfig& cfg) {
  SigmaWeights w;
  w.lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
  const double denom = n + w.lambda;
  w.wm0 = w.lambda / denom;
  w.wc0 = w.wm0 + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  w.wi = 0.5 / denom;
  return w;
}

// Lower Cholesky factor of (n+lambda)*P with diagonal jitter retries.
Eigen::MatrixXd scaled_sqrt(const Eigen::MatrixXd& cov, double scale, const UkfConfig& cfg) {
  Eigen::MatrixXd m = scale * cov;
  for (int attempt = 0; attempt <= cfg.jitter_retries; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    m += cfg.jitter * scale * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  }
  throw std::runtime_error("belief covariance factorization failed after jitter retries");
}

std::vector<Eigen::VectorXd> sigma_points(const Belief& b, const UkfConfig& cfg,
                                          const SigmaWeights& w) {
  const int n = static_cast<int>(b.mean.size());
  Eigen::MatrixXd root = scaled_sqrt(b.cov, n + w.lambda, cfg);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(2 * n + 1);
  pts.push_back(b.mean);
  for (int i = 0; i < n; ++i) pts.push_back(b.mean + root.col(i));
  for (int i = 0; i < n; ++i) pts.push_back(b.mean - root.col(i));
  return pts;
}

traffic::TrafficGridState vector_to_state(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size()) / 2;
  traffic::TrafficGridState s;
  s.density.assign(x.data(), x.data() + n);
  s.speed.assign(x.data() + n, x.data() + 2 * n);
  return s;
}

Eigen::VectorXd state_to_vector(const traffic::TrafficGridState& s) {
  const int n = s.n_cells();
  Eigen::VectorXd x(2 * n);
  for (int i = 0; i < n; ++i) x[i] = s.density[i];
  for (int i = 0; i < n; ++i) x[n + i] = s.speed[i];
  return x;
}

}  // namespace

traffic::TrafficGridState Belief::to_grid_state() const { return vector_to_state(mean); }

Belief Belief::from_grid_state(const traffic::TrafficGridState& s, const UkfConfig& cfg) {
  Belief b;
  b.mean = state_to_vector(s);
  const int n = s.n_cells();
  Eigen::VectorXd diag(2 * n);
  diag.head(n).setConstant(cfg.prior_density_std * cfg.prior_density_std);
  diag.tail(n).setConstant(cfg.prior_speed_std * cfg.prior_speed_std);
  b.cov = diag.asDiagonal();
  return b;
}

Belief unscented_transform(const Belief& belief,
                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& process,
                           const Eigen::VectorXd& q_diag, const UkfConfig& cfg) {
  const int n = static_cast<int>(belief.mean.size());
  const SigmaWeights w = weights_for(n, cfg);
  auto pts = sigma_points(belief, cfg, w);

  for (auto& pt : pts) pt = process(pt);

  Eigen::VectorXd mean = w.wm0 * pts[0];
  for (size_t i = 1; i < pts.size(); ++i) mean += w.wi * pts[i];

  Eigen::MatrixXd cov = w.wc0 * (pts[0] - mean) * (pts[0] - mean).transpose();
  for (size_t i = 1; i < pts.size(); ++i) {
    cov += w.wi * (pts[i] - mean) * (pts[i] - mean).transpose();
  }
  if (q_diag.size() == n) cov += Eigen::MatrixXd(q_diag.asDiagonal());

  Belief out;
  out.mean = mean;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

Belief ukf_predict(const Belief& belief, const traffic::SignalSchedule& signals,
                   std::int64_t k, const traffic::TrafficParams& params,
                   const UkfConfig& cfg) {
  const int n = static_cast<int>(belief.mean.size());
  const int half = n / 2;
  Eigen::VectorXd q(n);
  q.head(half).setConstant(cfg.noise.density_std * cfg.noise.density_std);
  q.tail(half).setConstant(cfg.noise.speed_std * cfg.noise.speed_std);
  return unscented_transform(
      belief,
      [&](const Eigen::VectorXd& x) {
        return state_to_vector(traffic::step(vector_to_state(x), signals, k, params));
      },
      q, cfg);
}

Belief ukf_update(const Belief& belief, const std::vector<CvMeasurement>& measurements,
                  const traffic::TrafficParams& params, const UkfConfig& cfg,
                  std::vector<int>* rejected) {
  std::vector<CvMeasurement> used;
  used.reserve(measurements.size());
  const double grid_extent = (params.n_cells - 1) * params.cell_length;
  for (size_t i = 0; i < measurements.size(); ++i) {
    const auto& m = measurements[i];
    if (m.position_m < 0.0 || m.position_m >= grid_extent) {
      if (rejected != nullptr) rejected->push_back(static_cast<int>(i));
      continue;
    }
    used.push_back(m);
  }
  if (used.empty()) return belief;

  const int n = static_cast<int>(belief.mean.size());
  const int m_dim = static_cast<int>(used.size());
  const SigmaWeights w = weights_for(n, cfg);
  auto pts = sigma_points(belief, cfg, w);

  auto observe = [&](const Eigen::VectorXd& x) {
    traffic::TrafficGridState s = vector_to_state(x);
    Eigen::VectorXd z(m_dim);
    for (int i = 0; i < m_dim; ++i) z[i] = traffic::measure_speed(s, used[i].position_m, params);
    return z;
  };

  std::vector<Eigen::VectorXd> zs;
  zs.reserve(pts.size());
  for (const auto& pt : pts) zs.push_back(observe(pt));

  Eigen::VectorXd z_mean = w.wm0 * zs[0];
  for (size_t i = 1; i < zs.size(); ++i) z_mean += w.wi * zs[i];

  Eigen::MatrixXd s_cov = w.wc0 * (zs[0] - z_mean) * (zs[0] - z_mean).transpose();
  Eigen::MatrixXd c_cov = w.wc0 * (pts[0] - belief.mean) * (zs[0] - z_mean).transpose();
  for (size_t i = 1; i < zs.size(); ++i) {
    s_cov += w.wi * (zs[i] - z_mean) * (zs[i] - z_mean).transpose();
    c_cov += w.wi * (pts[i] - belief.mean) * (zs[i] - z_mean).transpose();
  }
  s_cov += cfg.noise.measurement_std * cfg.noise.measurement_std *
           Eigen::MatrixXd::Identity(m_dim, m_dim);

  Eigen::MatrixXd gain = c_cov * s_cov.ldlt().solve(Eigen::MatrixXd::Identity(m_dim, m_dim));

  Eigen::VectorXd y(m_dim);
  for (int i = 0; i < m_dim; ++i) y[i] = used[i].speed_mps;

  Belief out;
  out.mean = belief.mean + gain * (y - z_mean);
  Eigen::MatrixXd cov = belief.cov - gain * s_cov * gain.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

double LeadPrediction::position_at(double t) const {
  const double idx = t / dt;
  const int i = std::min(static_cast<int>(idx), steps() - 1);
  if (i >= steps() - 1) return position_m.back();
  const double a = idx - i;
  return (1.0 - a) * position_m[i] + a * position_m[i + 1];
}

double LeadPrediction::speed_at(double t) const {
  const double idx = t / dt;
  const int i = std::min(static_cast<int>(idx), steps() - 1);
  if (i >= steps() - 1) return speed_mps.back();
  const double a = idx - i;
  return (1.0 - a) * speed_mps[i] + a * speed_mps[i + 1];
}

double LeadPrediction::sigma_at(double t) const {
  const double idx = t / dt;
  const int i = std::min(static_cast<int>(idx), steps() - 1);
  if (i >= steps() - 1) return sigma_position_m.back();
  const double a = idx - i;
  return (1.0 - a) * sigma_position_m[i] + a * sigma_position_m[i + 1];
}

LeadPrediction predict_lead(const Belief& belief, double lead_position_m,
                            double lead_speed_mps, const traffic::SignalSchedule& signals,
                            std::int64_t k0, double horizon_s,
                            const traffic::TrafficParams& params, const UkfConfig& cfg) {
  (void)cfg;
  if (horizon_s <= 0.0) throw std::invalid_argument("horizon must be positive");
  const double grid_extent = (params.n_cells - 1) * params.cell_length;
  if (lead_position_m < 0.0 || lead_position_m >= grid_extent) {
    throw std::domain_error("lead position outside grid");
  }

  const int steps = static_cast<int>(std::round(horizon_s / params.dt));
  const int n = params.n_cells;

  LeadPrediction pred;
  pred.dt = params.dt;
  pred.position_m.reserve(steps + 1);
  pred.speed_mps.reserve(steps + 1);
  pred.sigma_position_m.reserve(steps + 1);

  traffic::TrafficGridState field = belief.to_grid_state();
  double pos = lead_position_m;
  double var_d = 0.0;

  pred.position_m.push_back(pos);
  pred.speed_mps.push_back(std::max(0.0, lead_speed_mps));
  pred.sigma_position_m.push_back(0.0);

  for (int t = 0; t < steps; ++t) {
    double v;
    int cell;
    if (pos < grid_extent) {
      v = traffic::measure_speed(field, pos, params);
      cell = static_cast<int>(pos / params.cell_length);
    } else {
      v = field.speed[n - 1];
      cell = n - 1;
      pred.exited_grid = true;
    }
    v = std::max(0.0, v);

    const double var_v = std::max(0.0, belief.cov(n + cell, n + cell));
    var_d += params.dt * params.dt * var_v;

    pos += v * params.dt;
    field = traffic::step(field, signals, k0 + t, params);

    pred.position_m.push_back(pos);
    pred.speed_mps.push_back(v);
    pred.sigma_position_m.push_back(std::sqrt(var_d));
  }
  return pred;
}

Belief shift_window(const Belief& belief, int cells, double prior_density,
                    double prior_speed, const UkfConfig& cfg) {
  if (cells <= 0) return belief;
  const int n = belief.n_cells();
  const int s = std::min(cells, n);

  Belief out;
  out.mean = Eigen::VectorXd::Zero(2 * n);
  out.cov = Eigen::MatrixXd::Zero(2 * n, 2 * n);

  // Old index -> new index for cells that stay in the window.
  auto remap = [&](int j) { return j - s; };
  std::vector<int> old_of_new(2 * n, -1);
  for (int j = s; j < n; ++j) {
    old_of_new[remap(j)] = j;          // density block
    old_of_new[n + remap(j)] = n + j;  // speed block
  }

  for (int i = 0; i < 2 * n; ++i) {
    if (old_of_new[i] >= 0) {
      out.mean[i] = belief.mean[old_of_new[i]];
    } else {
      const bool is_speed = i >= n;
      out.mean[i] = is_speed ? prior_speed : prior_density;
      out.cov(i, i) = is_speed ? cfg.prior_speed_std * cfg.prior_speed_std
                               : cfg.prior_density_std * cfg.prior_density_std;
    }
  }
  for (int i = 0; i < 2 * n; ++i) {
    if (old_of_new[i] < 0) continue;
    for (int j = 0; j < 2 * n; ++j) {
      if (old_of_new[j] < 0) continue;
      out.cov(i, j) = belief.cov(old_of_new[i], old_of_new[j]);
    }
  }
  return out;
}

}  // namespace ecodrive::estimation
