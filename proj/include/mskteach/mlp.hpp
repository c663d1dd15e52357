#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace msk {

/// Fully connected tanh network with a linear output layer, evaluated on
/// column-major batches (one sample per column). Inputs and outputs are
/// z-scored with constants fixed at training time.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
  };

  Mlp() = default;
  /// Glorot-uniform hidden layers, zero output layer: an untrained network
  /// predicts the output mean.
  Mlp(int inputs, const std::vector<int>& hidden, int outputs, std::mt19937_64& rng);

  int inputs() const { return static_cast<int>(in_mean.size()); }
  int outputs() const { return static_cast<int>(out_mean.size()); }
  int parameter_count() const;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;

  /// Forward pass on normalized inputs; `acts` receives every layer input.
  Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd& Z, std::vector<Eigen::MatrixXd>* acts = nullptr) const;

  std::vector<Layer> layers;
  Eigen::VectorXd in_mean, in_scale, out_mean, out_scale;
};

struct TrainOptions {
  std::vector<int> hidden{128, 128};
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 3e-3;        // Adam, cosine-annealed
  double final_learning_rate = 2e-5;
  std::uint64_t seed = 1;
};

/// Fits y = net(x) by mini-batch Adam on the mean squared normalized error.
/// Columns of X and Y are samples. Throws TrainingError on a non-finite loss.
Mlp fit_mlp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TrainOptions& options);

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);

}  // namespace msk
