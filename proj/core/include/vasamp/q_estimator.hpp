#pragma once

// Per-token action-value estimators Q(s, x), fit by TD(lambda) on the same
// trajectory datasets as the state-value estimators.

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/policy.hpp"
#include "vasamp/td.hpp"
#include "vasamp/value.hpp"

namespace vas {

enum class BootstrapMode { exact, sampled };
enum class QParameterization { flat, dueling };

std::string to_string(BootstrapMode mode);
std::string to_string(QParameterization p);
BootstrapMode bootstrap_mode_from_string(const std::string& s);
QParameterization q_parameterization_from_string(const std::string& s);

class QEstimator {
 public:
  virtual ~QEstimator() = default;
  // One value per vocabulary token.
  virtual std::vector<double> predict_all(const State& state) const = 0;
  virtual double predict(const State& state, TokenId token) const { return predict_all(state).at(token); }
  virtual std::size_t vocab_size() const = 0;
};

// Lookup-table Q keyed like TabularValue. The dueling form stores a state
// value v(s) and per-token advantages a(s, x) starting at zero, with
// q(s, x) = v(s) + a(s, x). Unseen states predict the training-label mean.
class TabularQ final : public QEstimator {
 public:
  TabularQ(std::size_t vocab_size, QParameterization parameterization, bool center_advantage = false);

  std::vector<double> predict_all(const State& state) const override;
  std::size_t vocab_size() const override { return vocab_size_; }

  QParameterization parameterization() const noexcept { return parameterization_; }
  bool center_advantage() const noexcept { return center_advantage_; }
  double default_value() const noexcept { return default_value_; }
  std::size_t size() const noexcept { return table_.size(); }
  // Value head of the dueling form (the flat form returns the mean over tokens).
  double state_value(const State& state) const;

  void initialize(double label_mean);
  // One full-batch update over (state, token, target) triples. Flat: each
  // q(s, x) moves learning_rate of the way to the mean of its targets.
  // Dueling: v(s) moves towards the mean residual target - a(s, x) over all
  // samples at s, then a(s, x) towards the mean of target - v(s). With
  // center_advantage the advantages are shifted to zero mean across tokens
  // and the shift is folded into v(s), leaving q unchanged.
  // Returns the MSE measured before the update.
  double train_epoch(std::span<const State* const> states, std::span<const TokenId> tokens,
                     std::span<const double> targets, double learning_rate);

  nlohmann::json hyperparams() const;
  nlohmann::json parameters_json() const;
  static TabularQ from_parameters(const nlohmann::json& hyperparams, const nlohmann::json& parameters);

 private:
  struct Entry {
    double v = 0.0;
    std::vector<double> q;  // flat: q values; dueling: advantages
  };
  Entry& entry(const State& state);

  std::size_t vocab_size_;
  QParameterization parameterization_;
  bool center_advantage_;
  double default_value_ = 0.0;
  std::unordered_map<TokenSeq, Entry, VecHash> table_;
};

struct QFitOptions {
  BootstrapMode mode = BootstrapMode::sampled;
  QParameterization parameterization = QParameterization::flat;
  bool center_advantage = false;
  // Used when no base policy is supplied; 0 infers it from the largest token seen.
  std::size_t vocab_size = 0;
};

struct QFitResult {
  TabularQ estimator;
  TrainingLog log;
};

// lambda-returns G_t = gamma((1 - lambda) Vb(s_{t+1}) + lambda G_{t+1}) with
// G_{T'-1} = r, regressed onto Q(s_t, x_t). The bootstrap value Vb(s) is
// sum_x pi0(x|s) Q(s, x) in exact mode and Q(s, x_data) in sampled mode.
// Exact mode needs the base policy's full distribution.
QFitResult fit_q(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options,
                 const Policy& base);
// Only the tokens in the data are available through a restricted view, so
// exact mode throws ModeUnavailableError.
QFitResult fit_q(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options,
                 const RestrictedPolicyView& view);
// Sampled mode without any policy access.
QFitResult fit_q(const TrajectoryDataset& dataset, const TdConfig& config, const QFitOptions& options);

// Adapts a Q estimator to the state-value interface: V(s) = Q(parent, last token).
// The root (no generated tokens) uses the state-value head.
class QAsValue final : public ValueFunction {
 public:
  explicit QAsValue(std::shared_ptr<const TabularQ> q) : q_(std::move(q)) {}
  double predict(const State& state) const override;

 private:
  std::shared_ptr<const TabularQ> q_;
};

}  // namespace vas
