#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "morphopt/common/errors.hpp"
#include "morphopt/common/rng.hpp"

namespace morphopt::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

inline constexpr double kLogStdMin = -4.0;
inline constexpr double kLogStdMax = 1.0;

// Layer widths of a tanh MLP, input first.
struct MlpSpec {
  std::vector<int> widths;

  void validate() const;
  std::size_t param_count() const;
};

// Gaussian policy with a state-independent log standard deviation plus a
// separate value network, both tanh MLPs over the same observation.
struct PolicySpec {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<int> hidden{128, 128};
  double init_log_std = -0.7;

  MlpSpec mean_spec() const;
  MlpSpec value_spec() const;
  void validate() const;
  bool operator==(const PolicySpec&) const = default;
};

// Slices of the flat parameter vector. Each layer stores its weight as an
// (in x out) column-major block followed by its bias. Order: mean network,
// log-std vector, value network.
class PolicyLayout {
 public:
  struct Layer {
    std::size_t weight = 0;
    std::size_t bias = 0;
    int in = 0;
    int out = 0;
  };

  explicit PolicyLayout(PolicySpec spec);

  const PolicySpec& spec() const { return spec_; }
  const std::vector<Layer>& mean_layers() const { return mean_; }
  const std::vector<Layer>& value_layers() const { return value_; }
  std::size_t log_std_offset() const { return log_std_; }
  std::size_t size() const { return size_; }
  // Offset range [begin, end) of the mean network, for tests.
  std::size_t mean_end() const { return log_std_; }

 private:
  PolicySpec spec_;
  std::vector<Layer> mean_;
  std::vector<Layer> value_;
  std::size_t log_std_ = 0;
  std::size_t size_ = 0;
};

// Orthogonal hidden layers (gain sqrt 2), mean output scaled by 0.01, value
// output gain 1, zero biases, log-std at the configured initial value.
Vector<float> init_params(const PolicyLayout& layout, Rng& rng);

// Clamps the log-std slice into [kLogStdMin, kLogStdMax].
template <typename S>
void clamp_log_std(const PolicyLayout& layout, Vector<S>& params) {
  const auto a = layout.spec().act_dim;
  auto ls = params.segment(static_cast<Eigen::Index>(layout.log_std_offset()), a);
  ls = ls.cwiseMax(S(kLogStdMin)).cwiseMin(S(kLogStdMax));
}

template <typename S>
struct ForwardResult {
  Matrix<S> mean;   // batch x act
  Vector<S> value;  // batch
  Vector<S> log_std;
};

namespace detail {

template <typename S>
using ConstMap = Eigen::Map<const Matrix<S>>;

// Hidden activations are kept for the backward pass: acts[0] is the input.
template <typename S>
Matrix<S> mlp_forward(const std::vector<PolicyLayout::Layer>& layers, const S* p,
                      const Matrix<S>& x, std::vector<Matrix<S>>* acts) {
  Matrix<S> h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const ConstMap<S> w(p + L.weight, L.in, L.out);
    const Eigen::Map<const RowVector<S>> b(p + L.bias, L.out);
    if (acts) acts->push_back(h);
    Matrix<S> z = h * w;
    z.rowwise() += b;
    if (l + 1 < layers.size()) z = z.array().tanh().matrix();
    h = std::move(z);
  }
  return h;
}

// Accumulates parameter gradients given dL/d(output); acts must come from
// mlp_forward on the same input.
template <typename S>
void mlp_backward(const std::vector<PolicyLayout::Layer>& layers, const S* p,
                  const std::vector<Matrix<S>>& acts, Matrix<S> g, S* grad) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& L = layers[l];
    const Matrix<S>& in = acts[l];
    Eigen::Map<Matrix<S>> gw(grad + L.weight, L.in, L.out);
    Eigen::Map<RowVector<S>> gb(grad + L.bias, L.out);
    gw.noalias() += in.transpose() * g;
    gb += g.colwise().sum();
    if (l == 0) break;
    const ConstMap<S> w(p + L.weight, L.in, L.out);
    Matrix<S> back = g * w.transpose();
    // in = tanh(z) for every layer but the input.
    g = back.array() * (S(1) - in.array().square());
  }
}

}  // namespace detail

template <typename S>
ForwardResult<S> forward(const PolicyLayout& layout, const Vector<S>& params, const Matrix<S>& obs) {
  require(static_cast<std::size_t>(params.size()) == layout.size(), "parameter vector size mismatch");
  require(obs.cols() == layout.spec().obs_dim, "observation width mismatch");
  ForwardResult<S> r;
  r.mean = detail::mlp_forward<S>(layout.mean_layers(), params.data(), obs, nullptr);
  r.value = detail::mlp_forward<S>(layout.value_layers(), params.data(), obs, nullptr).col(0);
  r.log_std = params.segment(static_cast<Eigen::Index>(layout.log_std_offset()), layout.spec().act_dim);
  return r;
}

template <typename S>
Vector<S> value_forward(const PolicyLayout& layout, const Vector<S>& params, const Matrix<S>& obs) {
  require(obs.cols() == layout.spec().obs_dim, "observation width mismatch");
  return detail::mlp_forward<S>(layout.value_layers(), params.data(), obs, nullptr).col(0);
}

// Row-wise sum over action dimensions of the diagonal Gaussian log-density.
template <typename S>
Vector<S> gaussian_log_prob(const Matrix<S>& mean, const Vector<S>& log_std, const Matrix<S>& action) {
  require(mean.rows() == action.rows() && mean.cols() == action.cols() &&
              log_std.size() == mean.cols(),
          "log-prob shape mismatch");
  const S half_log_2pi = S(0.5 * std::log(2.0 * std::numbers::pi));
  const RowVector<S> inv_std = (-log_std.array()).exp().matrix().transpose();
  const Matrix<S> z = ((action - mean).array().rowwise() * inv_std.array()).matrix();
  const S constant = -log_std.sum() - S(mean.cols()) * half_log_2pi;
  return (S(-0.5) * z.array().square().rowwise().sum() + constant).matrix();
}

// One batch of training data. Unused fields may be left empty when their
// loss weight is zero.
template <typename S>
struct Batch {
  Matrix<S> obs;         // batch x obs
  Matrix<S> actions;     // batch x act
  Vector<S> old_log_prob;
  Vector<S> advantages;
  Vector<S> returns;
  Matrix<S> targets;     // batch x act, supervised regression of the mean

  Eigen::Index rows() const { return obs.rows(); }
};

// Weights of the loss composition
//   surrogate * (-mean min(rA, clip(r) A)) + value * mean (V - R)^2
//   - entropy * H + regression * mean |m - y|^2 + l2 * |theta|^2 / 2.
struct LossWeights {
  double surrogate = 1.0;
  double value = 0.5;
  double entropy = 0.0;
  double regression = 0.0;
  double l2 = 0.0;
  double clip = 0.2;
};

struct LossStats {
  double loss = 0.0;
  double surrogate = 0.0;   // mean clipped surrogate objective (to be maximized)
  double value_loss = 0.0;  // mean squared error
  double entropy = 0.0;
  double regression = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

template <typename S>
struct LossGrad {
  LossStats stats;
  Vector<S> grad;
};

// Loss value and exact gradient of the composition above with respect to the
// flat parameters.
template <typename S>
LossGrad<S> loss_and_grad(const PolicyLayout& layout, const Vector<S>& params, const Batch<S>& batch,
                          const LossWeights& w) {
  require(static_cast<std::size_t>(params.size()) == layout.size(), "parameter vector size mismatch");
  const Eigen::Index n = batch.rows();
  require(n > 0, "empty batch");
  const int a = layout.spec().act_dim;
  const S* p = params.data();
  LossGrad<S> out;
  out.grad = Vector<S>::Zero(params.size());
  S* g = out.grad.data();
  LossStats& st = out.stats;
  const S inv_n = S(1) / S(n);
  const bool policy_terms = w.surrogate != 0.0 || w.regression != 0.0;

  if (policy_terms) {
    std::vector<Matrix<S>> acts;
    const Matrix<S> mean = detail::mlp_forward<S>(layout.mean_layers(), p, batch.obs, &acts);
    Matrix<S> dmean = Matrix<S>::Zero(n, a);

    if (w.surrogate != 0.0) {
      require(batch.actions.rows() == n && batch.old_log_prob.size() == n && batch.advantages.size() == n,
              "surrogate batch shape mismatch");
      const auto ls_off = static_cast<Eigen::Index>(layout.log_std_offset());
      const Vector<S> log_std = params.segment(ls_off, a);
      const Vector<S> logp = gaussian_log_prob<S>(mean, log_std, batch.actions);
      const RowVector<S> inv_var = (S(-2) * log_std.array()).exp().matrix().transpose();
      const Matrix<S> diff = batch.actions - mean;
      const S lo = S(1.0 - w.clip), hi = S(1.0 + w.clip);
      Vector<S> dlogp(n);  // dLoss/dlogp per sample
      double surr = 0.0, ratio_sum = 0.0;
      int clipped = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const S r = std::exp(logp[i] - batch.old_log_prob[i]);
        const S adv = batch.advantages[i];
        const S rc = std::min(std::max(r, lo), hi);
        const S unclipped = r * adv, clipped_v = rc * adv;
        const bool take_unclipped = unclipped <= clipped_v;
        surr += static_cast<double>(take_unclipped ? unclipped : clipped_v);
        ratio_sum += static_cast<double>(r);
        if (r < lo || r > hi) ++clipped;
        // d(-s)/dlogp = -A r on the unclipped branch, zero on the clipped one.
        dlogp[i] = take_unclipped ? -adv * r * S(w.surrogate) * inv_n : S(0);
      }
      st.surrogate = surr / static_cast<double>(n);
      st.mean_ratio = ratio_sum / static_cast<double>(n);
      st.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
      st.loss -= w.surrogate * st.surrogate;
      // dlogp/dmean = (a - m) / sigma^2, dlogp/dlogstd = (a - m)^2 / sigma^2 - 1.
      const Matrix<S> scaled = (diff.array().rowwise() * inv_var.array()).matrix();
      dmean += (scaled.array().colwise() * dlogp.array()).matrix();
      const Matrix<S> dls_terms = ((diff.array().square().rowwise() * inv_var.array()) - S(1)).matrix();
      const RowVector<S> dls = dlogp.transpose() * dls_terms;
      Eigen::Map<RowVector<S>>(g + ls_off, a) += dls;
    }

    if (w.regression != 0.0) {
      require(batch.targets.rows() == n && batch.targets.cols() == a, "regression target shape mismatch");
      const Matrix<S> err = mean - batch.targets;
      st.regression = static_cast<double>(err.squaredNorm() * inv_n);
      st.loss += w.regression * st.regression;
      dmean += (S(2 * w.regression) * inv_n) * err;
    }
    detail::mlp_backward<S>(layout.mean_layers(), p, acts, std::move(dmean), g);
  }

  if (w.value != 0.0) {
    require(batch.returns.size() == n, "returns shape mismatch");
    std::vector<Matrix<S>> acts;
    const Matrix<S> v = detail::mlp_forward<S>(layout.value_layers(), p, batch.obs, &acts);
    const Vector<S> err = v.col(0) - batch.returns;
    st.value_loss = static_cast<double>(err.squaredNorm() * inv_n);
    st.loss += w.value * st.value_loss;
    Matrix<S> dv = (S(2 * w.value) * inv_n) * err;
    detail::mlp_backward<S>(layout.value_layers(), p, acts, std::move(dv), g);
  }

  // Entropy of the diagonal Gaussian: sum(log std) + a/2 log(2 pi e).
  {
    const auto ls_off = static_cast<Eigen::Index>(layout.log_std_offset());
    st.entropy = static_cast<double>(params.segment(ls_off, a).sum()) +
                 0.5 * a * std::log(2.0 * std::numbers::pi * std::numbers::e);
    if (w.entropy != 0.0) {
      st.loss -= w.entropy * st.entropy;
      out.grad.segment(ls_off, a).array() -= S(w.entropy);
    }
  }

  if (w.l2 != 0.0) {
    st.loss += 0.5 * w.l2 * static_cast<double>(params.squaredNorm());
    out.grad += S(w.l2) * params;
  }
  return out;
}

// Adam with bias correction.
template <typename S>
struct AdamState {
  Vector<S> m;
  Vector<S> v;
  long long step = 0;

  static AdamState zeros(std::size_t n) {
    return {Vector<S>::Zero(static_cast<Eigen::Index>(n)), Vector<S>::Zero(static_cast<Eigen::Index>(n)), 0};
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

template <typename S>
void adam_step(AdamState<S>& state, Vector<S>& params, const Vector<S>& grad, double stepsize) {
  require(state.m.size() == params.size() && grad.size() == params.size(), "adam shape mismatch");
  ++state.step;
  const S b1 = S(kAdamBeta1), b2 = S(kAdamBeta2);
  state.m = b1 * state.m + (S(1) - b1) * grad;
  state.v = b2 * state.v + (S(1) - b2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step);
  const S c1 = S(1.0 / (1.0 - std::pow(kAdamBeta1, t)));
  const S c2 = S(1.0 / (1.0 - std::pow(kAdamBeta2, t)));
  params.array() -= S(stepsize) * (state.m.array() * c1) / ((state.v.array() * c2).sqrt() + S(kAdamEps));
}

}  // namespace morphopt::nn
