#include "morphopt/nn/policy.hpp"

#include <Eigen/QR>
#include <random>

namespace morphopt::nn {

void MlpSpec::validate() const {
  if (widths.size() < 3) throw ConfigError("mlp needs at least one hidden layer");
  for (int w : widths) {
    if (w <= 0) throw ConfigError("mlp layer widths must be positive");
  }
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l] + 1) * static_cast<std::size_t>(widths[l + 1]);
  }
  return n;
}

MlpSpec PolicySpec::mean_spec() const {
  MlpSpec s;
  s.widths.push_back(obs_dim);
  s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
  s.widths.push_back(act_dim);
  return s;
}

MlpSpec PolicySpec::value_spec() const {
  MlpSpec s = mean_spec();
  s.widths.back() = 1;
  return s;
}

void PolicySpec::validate() const {
  if (obs_dim <= 0 || act_dim <= 0) throw ConfigError("policy input/output widths must be positive");
  if (!(init_log_std >= kLogStdMin && init_log_std <= kLogStdMax)) {
    throw ConfigError("initial log-std outside [-4, 1]");
  }
  mean_spec().validate();
}

namespace {

std::vector<PolicyLayout::Layer> lay_out(const MlpSpec& spec, std::size_t& cursor) {
  std::vector<PolicyLayout::Layer> layers;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    PolicyLayout::Layer L;
    L.in = spec.widths[l];
    L.out = spec.widths[l + 1];
    L.weight = cursor;
    cursor += static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out);
    L.bias = cursor;
    cursor += static_cast<std::size_t>(L.out);
    layers.push_back(L);
  }
  return layers;
}

// Orthogonal (in x out) block: rows or columns orthonormal, times gain.
Eigen::MatrixXd orthogonal(int in, int out, double gain, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int big = std::max(in, out), small = std::min(in, out);
  Eigen::MatrixXd a(big, small);
  for (int c = 0; c < small; ++c) {
    for (int r = 0; r < big; ++r) a(r, c) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign convention making the decomposition unique.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int c = 0; c < small; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  if (in < out) q.transposeInPlace();
  return gain * q;
}

void init_mlp(const std::vector<PolicyLayout::Layer>& layers, double out_gain, Vector<float>& p,
              Rng& rng) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const double gain = l + 1 < layers.size() ? std::sqrt(2.0) : out_gain;
    const Eigen::MatrixXd w = orthogonal(L.in, L.out, gain, rng);
    Eigen::Map<Matrix<float>>(p.data() + L.weight, L.in, L.out) = w.cast<float>();
  }
}

}  // namespace

PolicyLayout::PolicyLayout(PolicySpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t cursor = 0;
  mean_ = lay_out(spec_.mean_spec(), cursor);
  log_std_ = cursor;
  cursor += static_cast<std::size_t>(spec_.act_dim);
  value_ = lay_out(spec_.value_spec(), cursor);
  size_ = cursor;
}

Vector<float> init_params(const PolicyLayout& layout, Rng& rng) {
  Vector<float> p = Vector<float>::Zero(static_cast<Eigen::Index>(layout.size()));
  init_mlp(layout.mean_layers(), 0.01, p, rng);
  init_mlp(layout.value_layers(), 1.0, p, rng);
  p.segment(static_cast<Eigen::Index>(layout.log_std_offset()), layout.spec().act_dim)
      .setConstant(static_cast<float>(layout.spec().init_log_std));
  return p;
}

}  // namespace morphopt::nn
