#include "dsam/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>

#include "dsam/losses.hpp"
#include "dsam/model.hpp"
#include "dsam/sampling.hpp"

namespace dsam {
namespace {

constexpr double kSmoothGap = 1e-3;
constexpr int kMaxRedraws = 1000;

struct Instance {
  Matrix x;
  ClassifierWeights weights;
  SampledBatch batch;
};

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Instance draw_instance(const GradCheckOptions& o, Rng& rng) {
  Instance inst;
  std::vector<int> ids(static_cast<std::size_t>(o.classes));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  inst.batch.P = o.P;
  inst.batch.Q = o.Q;
  for (int k = 0; k < o.P; ++k) {
    for (int q = 0; q < o.Q; ++q) {
      inst.batch.indices.push_back(inst.batch.indices.size());
      inst.batch.labels.push_back(ids[static_cast<std::size_t>(k)]);
    }
  }
  inst.x = gaussian(o.P * o.Q, o.dim, rng);
  inst.weights = {gaussian(o.classes, o.dim, rng), gaussian(o.classes, 1, rng).col(0)};
  return inst;
}

// Away from every kink DSAM has: the sqrt of L_pos, max-positive ties and hinge boundaries.
bool dsam_smooth(const Matrix& x, const SampledBatch& batch, const DsamConfig& cfg) {
  const auto d = pairwise_angular_D(x);
  for (const auto& part : build_partitions(batch)) {
    const auto a = static_cast<Eigen::Index>(part.anchor);
    double pos = 0.0;
    std::vector<double> dp;
    for (std::size_t i : part.positives) {
      pos += (x.row(a) - x.row(static_cast<Eigen::Index>(i))).squaredNorm();
      dp.push_back(d(a, static_cast<Eigen::Index>(i)));
    }
    if (std::sqrt(pos) < kSmoothGap) return false;
    std::sort(dp.rbegin(), dp.rend());
    if (dp.size() > 1 && dp[0] - dp[1] < kSmoothGap) return false;
    for (std::size_t i : part.negatives) {
      if (std::abs(cfg.m_neg - (d(a, static_cast<Eigen::Index>(i)) - dp[0])) < kSmoothGap) return false;
    }
  }
  return true;
}

bool angular_smooth(const Matrix& x, const ClassifierWeights& w, std::span<const int> labels,
                    const AngularMarginConfig& cfg) {
  const UnitFeatureMatrix ux(x);
  const UnitFeatureMatrix uw(w.W);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double c = ux.rows().row(i).dot(uw.rows().row(labels[static_cast<std::size_t>(i)]));
    const double theta = std::acos(std::clamp(c, -1.0, 1.0));
    if (theta < kSmoothGap || std::numbers::pi - theta < kSmoothGap) return false;
    if (std::abs(cfg.m1 * theta + cfg.m2 - std::numbers::pi) < kSmoothGap) return false;
  }
  return true;
}

bool triplet_smooth(const Matrix& x, const SampledBatch& batch, double margin) {
  const Matrix sq = pairwise_sq_euclidean(x);
  for (const auto& part : build_partitions(batch)) {
    const auto a = static_cast<Eigen::Index>(part.anchor);
    std::vector<double> dp;
    std::vector<double> dn;
    for (std::size_t i : part.positives) dp.push_back(std::sqrt(sq(a, static_cast<Eigen::Index>(i))));
    for (std::size_t i : part.negatives) dn.push_back(std::sqrt(sq(a, static_cast<Eigen::Index>(i))));
    std::sort(dp.rbegin(), dp.rend());
    std::sort(dn.begin(), dn.end());
    if (dp.size() > 1 && dp[0] - dp[1] < kSmoothGap) return false;
    if (dn.size() > 1 && dn[1] - dn[0] < kSmoothGap) return false;
    if (std::abs(margin + dp[0] - dn[0]) < kSmoothGap) return false;
  }
  return true;
}

class Checker {
 public:
  explicit Checker(const GradCheckOptions& o) : o_(o) {}

  // Runs `one` on o.instances seeded instances; `one` returns the worst
  // relative error of that instance or a negative value to request a redraw.
  GradCheckRow run(const std::string& name, std::uint64_t salt, const std::function<double(Rng&)>& one) const {
    GradCheckRow row{name, 0.0, 0, false};
    Rng rng(o_.seed * 1000003ULL + salt);
    int redraws = 0;
    while (row.instances < o_.instances) {
      const double err = one(rng);
      if (err < 0.0) {
        if (++redraws > kMaxRedraws) break;
        continue;
      }
      row.worst_error = std::max(row.worst_error, err);
      ++row.instances;
    }
    row.passed = row.instances == o_.instances && row.worst_error <= o_.tolerance;
    return row;
  }

  double compare(const Matrix& analytic, const std::function<double(const Matrix&)>& f, const Matrix& at) const {
    const auto rows = at.rows();
    const auto cols = at.cols();
    const Vector numeric = finite_difference_gradient(
        [&](const Vector& v) { return f(unflatten(v, rows, cols)); }, flatten(at), o_.step);
    return relative_error(flatten(analytic), numeric);
  }

  double compare(const Vector& analytic, const std::function<double(const Vector&)>& f, const Vector& at) const {
    return relative_error(analytic, finite_difference_gradient(f, at, o_.step));
  }

 private:
  GradCheckOptions o_;
};

}  // namespace

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& o) {
  const Checker check(o);
  const DsamConfig dsam{0.9, 0.8, 0.05};
  const AngularMarginConfig arcface = AngularMarginConfig::arcface();
  std::vector<GradCheckRow> rows;

  rows.push_back(check.run("softmax_ce", 1, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    const auto& labels = in.batch.labels;
    const LossResult r = softmax_ce(in.x, in.weights, labels);
    double err = check.compare(r.grad_features, [&](const Matrix& x) { return softmax_ce(x, in.weights, labels).value; }, in.x);
    err = std::max(err, check.compare(*r.grad_weights, [&](const Matrix& w) {
      return softmax_ce(in.x, {w, in.weights.bias}, labels).value;
    }, in.weights.W));
    err = std::max(err, check.compare(*r.grad_bias, [&](const Vector& b) {
      return softmax_ce(in.x, {in.weights.W, b}, labels).value;
    }, in.weights.bias));
    return err;
  }));

  rows.push_back(check.run("angular_margin_ce", 2, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    const auto& labels = in.batch.labels;
    if (!angular_smooth(in.x, in.weights, labels, arcface)) return -1.0;
    const LossResult r = angular_margin_ce(in.x, in.weights, labels, arcface);
    double err = check.compare(r.grad_features, [&](const Matrix& x) {
      return angular_margin_ce(x, in.weights, labels, arcface).value;
    }, in.x);
    err = std::max(err, check.compare(*r.grad_weights, [&](const Matrix& w) {
      return angular_margin_ce(in.x, {w, in.weights.bias}, labels, arcface).value;
    }, in.weights.W));
    return err;
  }));

  rows.push_back(check.run("dsam_pos", 3, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    const auto parts = build_partitions(in.batch);
    const auto& part = parts[std::uniform_int_distribution<std::size_t>(0, parts.size() - 1)(rng)];
    const AnchorTerm t = dsam_pos(part, in.x);
    if (t.value < kSmoothGap) return -1.0;
    return check.compare(t.grad, [&](const Matrix& x) { return dsam_pos(part, x).value; }, in.x);
  }));

  rows.push_back(check.run("dsam_neg_through_D", 4, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    // Shrink same-class spread so some hinges are active.
    for (Eigen::Index i = 0; i < in.x.rows(); ++i) {
      in.x.row(i) = 0.3 * in.x.row(i) + in.x.row(i - i % o.Q);
    }
    if (!dsam_smooth(in.x, in.batch, dsam)) return -1.0;
    const auto parts = build_partitions(in.batch);
    const auto& part = parts[std::uniform_int_distribution<std::size_t>(0, parts.size() - 1)(rng)];
    const NegativeTerm t = dsam_neg(part, pairwise_angular_D(in.x), dsam);
    const Matrix grad = angular_D_backward(in.x, t.grad_d);
    return check.compare(grad, [&](const Matrix& x) { return dsam_neg(part, pairwise_angular_D(x), dsam).value; }, in.x);
  }));

  rows.push_back(check.run("dsam_loss", 5, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    for (Eigen::Index i = 0; i < in.x.rows(); ++i) {
      in.x.row(i) = 0.3 * in.x.row(i) + in.x.row(i - i % o.Q);
    }
    if (!dsam_smooth(in.x, in.batch, dsam)) return -1.0;
    const LossResult r = dsam_loss(in.x, in.batch, dsam);
    return check.compare(r.grad_features, [&](const Matrix& x) { return dsam_loss(x, in.batch, dsam).value; }, in.x);
  }));

  for (BaseLoss base : {BaseLoss::Softmax, BaseLoss::AngularMargin}) {
    const std::string name = base == BaseLoss::Softmax ? "combined_loss[softmax]" : "combined_loss[angular-margin]";
    rows.push_back(check.run(name, base == BaseLoss::Softmax ? 6 : 7, [&](Rng& rng) {
      Instance in = draw_instance(o, rng);
      for (Eigen::Index i = 0; i < in.x.rows(); ++i) {
        in.x.row(i) = 0.3 * in.x.row(i) + in.x.row(i - i % o.Q);
      }
      const auto& labels = in.batch.labels;
      if (!dsam_smooth(in.x, in.batch, dsam)) return -1.0;
      if (base == BaseLoss::AngularMargin && !angular_smooth(in.x, in.weights, labels, arcface)) return -1.0;
      auto value = [&](const Matrix& x, const ClassifierWeights& w) {
        return combined_loss(x, w, labels, in.batch, base, arcface, dsam).value;
      };
      const LossResult r = combined_loss(in.x, in.weights, labels, in.batch, base, arcface, dsam);
      double err = check.compare(r.grad_features, [&](const Matrix& x) { return value(x, in.weights); }, in.x);
      err = std::max(err, check.compare(*r.grad_weights, [&](const Matrix& w) {
        return value(in.x, {w, in.weights.bias});
      }, in.weights.W));
      return err;
    }));
  }

  rows.push_back(check.run("triplet_batch_hard", 8, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    const double margin = 0.3;
    for (Eigen::Index i = 0; i < in.x.rows(); ++i) {
      in.x.row(i) = 0.5 * in.x.row(i) + in.x.row(i - i % o.Q);
    }
    if (!triplet_smooth(in.x, in.batch, margin)) return -1.0;
    const LossResult r = triplet_batch_hard(in.x, in.batch, margin);
    return check.compare(r.grad_features, [&](const Matrix& x) { return triplet_batch_hard(x, in.batch, margin).value; }, in.x);
  }));

  rows.push_back(check.run("ang_pos_loss", 9, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    const auto parts = build_partitions(in.batch);
    const auto& part = parts[std::uniform_int_distribution<std::size_t>(0, parts.size() - 1)(rng)];
    const UnitFeatureMatrix unit(in.x);
    for (std::size_t i : part.positives) {
      const double c = unit.rows().row(static_cast<Eigen::Index>(part.anchor)).dot(unit.rows().row(static_cast<Eigen::Index>(i)));
      if (1.0 - std::abs(c) < kSmoothGap) return -1.0;
    }
    const AngularPositiveTerm t = ang_pos_loss(part, in.x);
    double err = check.compare(t.grad_features, [&](const Matrix& x) { return ang_pos_loss(part, x).value; }, in.x);
    // The unit-vector form: the unit rows are free variables, no renormalization.
    const auto a = static_cast<Eigen::Index>(part.anchor);
    err = std::max(err, check.compare(t.grad_unit, [&](const Matrix& u) {
      double v = 0.0;
      for (std::size_t i : part.positives) v += std::acos(u.row(a).dot(u.row(static_cast<Eigen::Index>(i))));
      return v;
    }, unit.rows()));
    return err;
  }));

  rows.push_back(check.run("model_backward", 10, [&](Rng& rng) {
    Instance in = draw_instance(o, rng);
    EmbeddingModel model({o.dim, 16, 16, o.dim}, rng);
    // Keep every hidden pre-activation away from the ReLU kink.
    {
      Matrix h = in.x;
      for (std::size_t k = 0; k + 1 < model.layers().size(); ++k) {
        Matrix z = h * model.layers()[k].W.transpose();
        z.rowwise() += model.layers()[k].b.transpose();
        if ((z.array().abs() < kSmoothGap).any()) return -1.0;
        h = z.cwiseMax(0.0);
      }
    }
    const auto& labels = in.batch.labels;
    auto loss_of = [&](const EmbeddingModel& m, const Matrix& inputs) {
      return softmax_ce(forward(m, inputs), in.weights, labels).value;
    };
    const LossResult head = softmax_ce(forward(model, in.x), in.weights, labels);
    const ModelGradients g = backward(model, in.x, head.grad_features);
    double err = check.compare(g.inputs, [&](const Matrix& x) { return loss_of(model, x); }, in.x);
    for (std::size_t k = 0; k < model.layers().size(); ++k) {
      err = std::max(err, check.compare(g.layers[k].W, [&](const Matrix& w) {
        EmbeddingModel probe = model;
        probe.layers()[k].W = w;
        return loss_of(probe, in.x);
      }, model.layers()[k].W));
      err = std::max(err, check.compare(g.layers[k].b, [&](const Vector& b) {
        EmbeddingModel probe = model;
        probe.layers()[k].b = b;
        return loss_of(probe, in.x);
      }, model.layers()[k].b));
    }
    return err;
  }));

  return rows;
}

}  // namespace dsam
