#pragma once

// Trainable state-value estimators, decoupled from the base policy: they see
// only token sequences and are fit by regression on TD targets.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vasamp/mdp.hpp"
#include "vasamp/value_function.hpp"

namespace vas {

class ValueEstimator : public ValueFunction {
 public:
  // Called once before training with the mean of the terminal rewards.
  virtual void initialize(double label_mean) { (void)label_mean; }

  // Called at the start of every epoch.
  virtual void begin_epoch() {}

  // One update towards `targets` on 0.5 * mean squared error. Returns the
  // batch MSE measured before the update.
  virtual double train_step(std::span<const State* const> states, std::span<const double> targets,
                            double learning_rate) = 0;

  virtual std::string kind() const = 0;
  virtual nlohmann::json hyperparams() const = 0;
  virtual nlohmann::json parameters_json() const = 0;
  virtual std::unique_ptr<ValueEstimator> clone() const = 0;
};

struct VecHash {
  std::size_t operator()(const TokenSeq& s) const noexcept;
};

// Lookup table keyed by the full token sequence (prompt, separator, generated).
// Unseen states predict the training-label mean. A step moves each visited
// entry by learning_rate / (visits this epoch) towards its target, so with
// learning_rate = 1 an epoch leaves every entry at the mean of its targets.
class TabularValue final : public ValueEstimator {
 public:
  TabularValue() = default;

  double predict(const State& state) const override;
  void initialize(double label_mean) override;
  void begin_epoch() override;
  double train_step(std::span<const State* const> states, std::span<const double> targets,
                    double learning_rate) override;

  std::string kind() const override { return "tabular"; }
  nlohmann::json hyperparams() const override { return {{"default_value", default_value_}}; }
  nlohmann::json parameters_json() const override;
  std::unique_ptr<ValueEstimator> clone() const override { return std::make_unique<TabularValue>(*this); }

  double default_value() const noexcept { return default_value_; }
  std::size_t size() const noexcept { return table_.size(); }
  void set(const State& state, double value);

  static TabularValue from_parameters(const nlohmann::json& hyperparams, const nlohmann::json& parameters);
  static TokenSeq key(const State& state);

 private:
  struct Entry {
    double value = 0.0;
    std::uint64_t visits = 0;
  };
  double default_value_ = 0.0;
  std::unordered_map<TokenSeq, Entry, VecHash> table_;
};

// Sparse binary features of a state: a bias, a one-hot of the generated
// length (0..max_len), and one-hots of the last j tokens for j = 1..order,
// where positions before the start of the sequence read as a BOS symbol.
class NgramFeatures {
 public:
  NgramFeatures(std::size_t vocab_size, std::size_t order, std::size_t max_len);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t max_len() const noexcept { return max_len_; }

  // Indices of the active (value 1) features, strictly increasing.
  std::vector<std::size_t> active(const State& state) const;

 private:
  std::size_t vocab_size_;
  std::size_t order_;
  std::size_t max_len_;
  std::vector<std::size_t> block_offset_;
  std::size_t dim_;
};

// Estimators with a flat parameter vector and analytic gradients.
class DifferentiableValue : public ValueEstimator {
 public:
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // Loss 0.5 * mean_i (predict(s_i) - t_i)^2 and its gradient w.r.t. parameters().
  virtual double loss_and_gradient(std::span<const State* const> states, std::span<const double> targets,
                                   std::vector<double>& gradient) const = 0;

  double train_step(std::span<const State* const> states, std::span<const double> targets,
                    double learning_rate) override;
};

class LinearValue final : public DifferentiableValue {
 public:
  explicit LinearValue(NgramFeatures features);

  double predict(const State& state) const override;
  // Sets the bias to the label mean; other weights stay zero.
  void initialize(double label_mean) override;
  double loss_and_gradient(std::span<const State* const> states, std::span<const double> targets,
                           std::vector<double>& gradient) const override;

  std::span<double> parameters() override { return weights_; }
  std::span<const double> parameters() const override { return weights_; }

  std::string kind() const override { return "linear"; }
  nlohmann::json hyperparams() const override;
  nlohmann::json parameters_json() const override;
  std::unique_ptr<ValueEstimator> clone() const override { return std::make_unique<LinearValue>(*this); }

  const NgramFeatures& features() const noexcept { return features_; }

 private:
  NgramFeatures features_;
  std::vector<double> weights_;
};

// Fully connected network over NgramFeatures with tanh hidden layers and a
// linear output unit. Parameter layout (row-major), per hidden layer l:
//   W_l [width_l x fan_in_l], b_l [width_l]; then output w_o [width_last], b_o [1].
class MlpValue final : public DifferentiableValue {
 public:
  // 1 or 2 hidden layers. Weights ~ U(-a, a) with a = init_scale * sqrt(6 / (fan_in + fan_out)).
  MlpValue(NgramFeatures features, std::vector<std::size_t> hidden, std::uint64_t seed, double init_scale = 1.0);

  double predict(const State& state) const override;
  // Sets the output bias to the label mean.
  void initialize(double label_mean) override;
  double loss_and_gradient(std::span<const State* const> states, std::span<const double> targets,
                           std::vector<double>& gradient) const override;

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  std::string kind() const override { return "mlp"; }
  nlohmann::json hyperparams() const override;
  nlohmann::json parameters_json() const override;
  std::unique_ptr<ValueEstimator> clone() const override { return std::make_unique<MlpValue>(*this); }

  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  const NgramFeatures& features() const noexcept { return features_; }

 private:
  struct Layer {
    std::size_t fan_in;
    std::size_t width;
    std::size_t w_offset;
    std::size_t b_offset;
  };
  // Hidden activations for one input, layer by layer.
  std::vector<std::vector<double>> forward(const std::vector<std::size_t>& active) const;
  double output(const std::vector<double>& last_hidden) const;

  NgramFeatures features_;
  std::vector<std::size_t> hidden_;
  std::vector<Layer> layers_;
  std::size_t out_w_offset_ = 0;
  std::size_t out_b_offset_ = 0;
  std::uint64_t seed_;
  double init_scale_;
  std::vector<double> params_;
};

}  // namespace vas
