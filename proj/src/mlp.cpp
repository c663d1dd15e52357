#include "mskteach/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mskteach/types.hpp"

namespace msk {

Mlp::Mlp(int inputs, const std::vector<int>& hidden, int outputs, std::mt19937_64& rng) {
  int fan_in = inputs;
  for (int width : hidden) {
    const double a = std::sqrt(6.0 / (fan_in + width));
    std::uniform_real_distribution<double> u(-a, a);
    Layer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(width)};
    for (Eigen::Index k = 0; k < layer.W.size(); ++k) layer.W.data()[k] = u(rng);
    layers.push_back(std::move(layer));
    fan_in = width;
  }
  layers.push_back({Eigen::MatrixXd::Zero(outputs, fan_in), Eigen::VectorXd::Zero(outputs)});
  in_mean = Eigen::VectorXd::Zero(inputs);
  in_scale = Eigen::VectorXd::Ones(inputs);
  out_mean = Eigen::VectorXd::Zero(outputs);
  out_scale = Eigen::VectorXd::Ones(outputs);
}

int Mlp::parameter_count() const {
  int n = 0;
  for (const Layer& l : layers) n += static_cast<int>(l.W.size() + l.b.size());
  return n;
}

Eigen::MatrixXd Mlp::forward_normalized(const Eigen::MatrixXd& Z, std::vector<Eigen::MatrixXd>* acts) const {
  Eigen::MatrixXd a = Z;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (acts) acts->push_back(a);
    Eigen::MatrixXd z = layers[k].W * a;
    z.colwise() += layers[k].b;
    a = (k + 1 < layers.size()) ? Eigen::MatrixXd(z.array().tanh()) : z;
  }
  return a;
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd Z = (X.colwise() - in_mean).array().colwise() / in_scale.array();
  Eigen::MatrixXd Y = forward_normalized(Z).array().colwise() * out_scale.array();
  return Y.colwise() + out_mean;
}

Eigen::VectorXd Mlp::predict(const Eigen::VectorXd& x) const { return predict(Eigen::MatrixXd(x)).col(0); }

namespace {

void standardize(const Eigen::MatrixXd& X, Eigen::VectorXd& mean, Eigen::VectorXd& scale) {
  mean = X.rowwise().mean();
  scale = ((X.colwise() - mean).array().square().rowwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    if (!(scale(i) > 1e-12)) scale(i) = 1.0;  // constant feature
}

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  explicit Adam(const Mlp& net) {
    for (const auto& l : net.layers) {
      mW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      vW.push_back(mW.back());
      mb.push_back(Eigen::VectorXd::Zero(l.b.size()));
      vb.push_back(mb.back());
    }
  }

  template <typename P, typename G, typename M>
  void update(P& p, const G& g, M& m, M& v, double lr, double c1, double c2) {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  void step(Mlp& net, const std::vector<Eigen::MatrixXd>& gW, const std::vector<Eigen::VectorXd>& gb, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      update(net.layers[k].W, gW[k], mW[k], vW[k], lr, c1, c2);
      update(net.layers[k].b, gb[k], mb[k], vb[k], lr, c1, c2);
    }
  }
};

}  // namespace

Mlp fit_mlp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TrainOptions& opt) {
  if (X.cols() == 0 || X.cols() != Y.cols()) throw DataError("training data must be nonempty and paired");
  std::mt19937_64 rng(opt.seed);
  Mlp net(static_cast<int>(X.rows()), opt.hidden, static_cast<int>(Y.rows()), rng);
  standardize(X, net.in_mean, net.in_scale);
  standardize(Y, net.out_mean, net.out_scale);
  const Eigen::MatrixXd Zx = (X.colwise() - net.in_mean).array().colwise() / net.in_scale.array();
  const Eigen::MatrixXd Zy = (Y.colwise() - net.out_mean).array().colwise() / net.out_scale.array();

  const Eigen::Index n = X.cols();
  const int batch = std::max(1, std::min<int>(opt.batch_size, static_cast<int>(n)));
  const long batches_per_epoch = (n + batch - 1) / batch;
  const long total = static_cast<long>(opt.epochs) * batches_per_epoch;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  Adam adam(net);
  std::vector<Eigen::MatrixXd> gW(net.layers.size());
  std::vector<Eigen::VectorXd> gb(net.layers.size());
  Eigen::MatrixXd xb, yb;
  long step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min<Eigen::Index>(batch, n - start);
      xb.resize(Zx.rows(), m);
      yb.resize(Zy.rows(), m);
      for (Eigen::Index c = 0; c < m; ++c) {
        xb.col(c) = Zx.col(order[start + c]);
        yb.col(c) = Zy.col(order[start + c]);
      }
      std::vector<Eigen::MatrixXd> acts;
      const Eigen::MatrixXd out = net.forward_normalized(xb, &acts);
      const Eigen::MatrixXd err = out - yb;
      epoch_loss += err.squaredNorm();

      // Loss = mean over batch and outputs of err^2.
      Eigen::MatrixXd delta = (2.0 / (m * err.rows())) * err;
      for (std::size_t k = net.layers.size(); k-- > 0;) {
        gW[k] = delta * acts[k].transpose();
        gb[k] = delta.rowwise().sum();
        if (k > 0) delta = (net.layers[k].W.transpose() * delta).array() * (1.0 - acts[k].array().square());
      }
      const double progress = total > 1 ? static_cast<double>(step) / (total - 1) : 1.0;
      const double lr = opt.final_learning_rate +
                        0.5 * (opt.learning_rate - opt.final_learning_rate) * (1.0 + std::cos(M_PI * progress));
      adam.step(net, gW, gb, lr);
      ++step;
    }
    if (!std::isfinite(epoch_loss)) throw TrainingError("training loss diverged at epoch " + std::to_string(epoch));
  }
  return net;
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const Mlp& net) {
  nlohmann::json doc;
  doc["in_mean"] = vec_json(net.in_mean);
  doc["in_scale"] = vec_json(net.in_scale);
  doc["out_mean"] = vec_json(net.out_mean);
  doc["out_scale"] = vec_json(net.out_scale);
  doc["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers) {
    // Row-major weights read naturally as one list per unit.
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) rows.push_back(vec_json(l.W.row(r).transpose()));
    doc["layers"].push_back({{"W", rows}, {"b", vec_json(l.b)}});
  }
  return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  Mlp net;
  try {
    net.in_mean = vec_from(doc.at("in_mean"));
    net.in_scale = vec_from(doc.at("in_scale"));
    net.out_mean = vec_from(doc.at("out_mean"));
    net.out_scale = vec_from(doc.at("out_scale"));
    Eigen::Index fan_in = net.in_mean.size();
    for (const auto& l : doc.at("layers")) {
      const auto& rows = l.at("W");
      Mlp::Layer layer{Eigen::MatrixXd(rows.size(), fan_in), vec_from(l.at("b"))};
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const Eigen::VectorXd row = vec_from(rows[r]);
        if (row.size() != fan_in) throw DataError("weight row has the wrong width");
        layer.W.row(static_cast<Eigen::Index>(r)) = row.transpose();
      }
      if (layer.b.size() != layer.W.rows()) throw DataError("bias size does not match layer width");
      fan_in = layer.W.rows();
      net.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed network weights: ") + e.what());
  }
  if (net.layers.empty() || net.layers.back().W.rows() != net.out_mean.size() ||
      net.in_scale.size() != net.in_mean.size() || net.out_scale.size() != net.out_mean.size())
    throw DataError("network weights are inconsistent with the normalization constants");
  return net;
}

}  // namespace msk
