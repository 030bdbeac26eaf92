#include "tacoord/approximator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "tacoord/case_io.hpp"
#include "tacoord/errors.hpp"

namespace tacoord {

using nlohmann::json;

namespace {

std::string transform_name(TargetTransform t) {
  switch (t) {
    case TargetTransform::None: return "none";
    case TargetTransform::Standardize: return "standardize";
    case TargetTransform::Log: return "log";
  }
  return "none";
}

TargetTransform parse_transform(const std::string& s) {
  if (s == "none") return TargetTransform::None;
  if (s == "standardize") return TargetTransform::Standardize;
  if (s == "log") return TargetTransform::Log;
  throw InputError("unknown target transform '" + s + "'");
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

}  // namespace

void MlpConfig::validate() const {
  if (layers.size() < 2) throw InputError("MLP needs at least an input and an output layer");
  if (layers.back() != 1) throw InputError("MLP output layer must have exactly one neuron");
  for (int n : layers) {
    if (n < 1) throw InputError("MLP layer sizes must be positive");
  }
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
  if (epochs < 1 || batch_size < 1 || patience < 1) throw InputError("epochs, batch size and patience must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw InputError("momentum must lie in [0, 1)");
}

json MlpConfig::to_json() const {
  return {{"layers", layers},       {"learning_rate", learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size}, {"seed", seed},                 {"patience", patience},
          {"momentum", momentum},   {"target", transform_name(target)}};
}

MlpConfig MlpConfig::from_json(const json& j, int n_inputs) {
  MlpConfig c;
  try {
    if (j.contains("layers")) {
      c.layers = j.at("layers").get<std::vector<int>>();
    } else {
      c.layers.push_back(n_inputs);
      for (int h : j.value("hidden", std::vector<int>{64, 64})) c.layers.push_back(h);
      c.layers.push_back(1);
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
    c.momentum = j.value("momentum", c.momentum);
    c.target = parse_transform(j.value("target", transform_name(c.target)));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed MLP config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string MlpConfig::hash() const { return fnv1a_hex(to_json().dump()); }

double TargetScaling::to_network(double s) const {
  switch (transform) {
    case TargetTransform::None: return s;
    case TargetTransform::Standardize: return (s - mean) / stddev;
    case TargetTransform::Log: return (std::log(s) - mean) / stddev;
  }
  return s;
}

double TargetScaling::from_network(double t) const {
  switch (transform) {
    case TargetTransform::None: return t;
    case TargetTransform::Standardize: return t * stddev + mean;
    case TargetTransform::Log: return std::exp(t * stddev + mean);
  }
  return t;
}

MlpModel MlpModel::initialize(const MlpConfig& cfg) {
  cfg.validate();
  MlpModel m;
  m.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t l = 0; l + 1 < cfg.layers.size(); ++l) {
    const int fan_in = cfg.layers[l];
    const int fan_out = cfg.layers[l + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = dist(rng);
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

json MlpModel::to_json() const {
  json j;
  j["schema"] = kWeightsSchema;
  j["config"] = config.to_json();
  j["config_hash"] = config.hash();
  j["standardizer"] = standardizer.to_json();
  j["target"] = {{"transform", transform_name(target.transform)}, {"mean", target.mean}, {"std", target.stddev}};
  j["n_y01"] = n_y01;
  j["n_y02"] = n_y02;
  j["n_dc"] = n_dc;
  j["layers"] = json::array();
  for (const auto& layer : layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.w.size()));
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) w.push_back(layer.w(r, c));
    }
    std::vector<double> b(layer.b.data(), layer.b.data() + layer.b.size());
    j["layers"].push_back({{"rows", layer.w.rows()}, {"cols", layer.w.cols()}, {"weights", w}, {"bias", b}});
  }
  j["training"] = {{"seed", config.seed},
                   {"epochs_run", meta.epochs_run},
                   {"best_epoch", meta.best_epoch},
                   {"train_loss", meta.train_loss},
                   {"validation_loss", std::isfinite(meta.validation_loss) ? json(meta.validation_loss) : json(nullptr)}};
  return j;
}

MlpModel MlpModel::from_json(const json& j) {
  MlpModel m;
  try {
    if (j.value("schema", "") != kWeightsSchema) throw InputError("weights file has an unknown schema");
    m.config = MlpConfig::from_json(j.at("config"), 0);
    m.standardizer = Standardizer::from_json(j.at("standardizer"));
    const auto& t = j.at("target");
    m.target = {parse_transform(t.at("transform").get<std::string>()), t.at("mean").get<double>(),
                t.at("std").get<double>()};
    m.n_y01 = j.at("n_y01").get<int>();
    m.n_y02 = j.at("n_y02").get<int>();
    m.n_dc = j.at("n_dc").get<int>();
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      const auto w = lj.at("weights").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
        throw InputError("weights file: layer size mismatch");
      }
      DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.w(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        layer.b(r) = b[static_cast<std::size_t>(r)];
      }
      m.layers.push_back(std::move(layer));
    }
    const auto& tr = j.at("training");
    m.meta.epochs_run = tr.value("epochs_run", 0);
    m.meta.best_epoch = tr.value("best_epoch", 0);
    m.meta.train_loss = tr.value("train_loss", 0.0);
    m.meta.validation_loss = tr.at("validation_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                                : tr.at("validation_loss").get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed weights file: ") + e.what());
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    if (l + 1 < m.layers.size() && m.layers[l].w.rows() != m.layers[l + 1].w.cols()) {
      throw InputError("weights file: layer dimensions do not chain");
    }
  }
  if (m.layers.empty() || m.layers.back().w.rows() != 1) throw InputError("weights file: output layer must be scalar");
  if (m.input_size() != m.n_y01 + m.n_y02 + m.n_dc) throw InputError("weights file: input size does not match features");
  if (static_cast<int>(m.standardizer.mean.size()) != m.n_y01 + m.n_y02) {
    throw InputError("weights file: standardizer size does not match features");
  }
  return m;
}

void MlpModel::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump(1) + "\n"); }

MlpModel MlpModel::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

double network_output(const MlpModel& m, const Eigen::VectorXd& r) {
  if (r.size() != m.input_size()) {
    throw InputError(fmt::format("model expects {} inputs, got {}", m.input_size(), r.size()));
  }
  Eigen::VectorXd a = r;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Eigen::VectorXd z = m.layers[l].w * a + m.layers[l].b;
    a = (l + 1 < m.layers.size()) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a(0);
}

double forward(const MlpModel& m, const Eigen::VectorXd& r) { return m.target.from_network(network_output(m, r)); }

Eigen::VectorXd model_input(const MlpModel& m, std::span<const double> y0, std::span<const int> gamma) {
  if (static_cast<int>(y0.size()) != m.n_y01 + m.n_y02 || static_cast<int>(gamma.size()) != m.n_dc) {
    throw InputError(fmt::format("feature vector has {}+{} entries, model expects {}+{}", y0.size(), gamma.size(),
                                 m.n_y01 + m.n_y02, m.n_dc));
  }
  const Eigen::VectorXd z = m.standardizer.apply(Eigen::Map<const Eigen::VectorXd>(y0.data(), static_cast<Eigen::Index>(y0.size())));
  Eigen::VectorXd r(z.size() + static_cast<Eigen::Index>(gamma.size()));
  r.head(z.size()) = z;
  for (std::size_t l = 0; l < gamma.size(); ++l) r(z.size() + static_cast<Eigen::Index>(l)) = gamma[l];
  return r;
}

namespace {

std::vector<double> y0_of(const Sample& s) {
  std::vector<double> y0 = s.y01;
  y0.insert(y0.end(), s.y02.begin(), s.y02.end());
  return y0;
}

}  // namespace

Eigen::MatrixXd input_matrix(const MlpModel& m, std::span<const Sample> samples) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), m.input_size());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = model_input(m, y0_of(samples[r]), samples[r].gamma).transpose();
  }
  return x;
}

Eigen::VectorXd target_vector(const MlpModel& m, std::span<const Sample> samples) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t r = 0; r < samples.size(); ++r) t(static_cast<Eigen::Index>(r)) = m.target.to_network(samples[r].s_inf);
  return t;
}

double loss(const MlpModel& m, std::span<const Sample> samples) {
  if (samples.empty()) throw InputError("loss needs at least one sample");
  double sum = 0.0;
  for (const auto& s : samples) {
    const double e = forward(m, model_input(m, y0_of(s), s.gamma)) - s.s_inf;
    sum += e * e;
  }
  return sum / static_cast<double>(samples.size());
}

namespace {

struct ForwardPass {
  std::vector<Eigen::MatrixXd> activations;  // a_0 = inputs, ..., a_L = outputs
  std::vector<Eigen::MatrixXd> preactivations;
};

ForwardPass forward_batch(const MlpModel& m, const Eigen::MatrixXd& inputs) {
  ForwardPass fp;
  fp.activations.push_back(inputs);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Eigen::MatrixXd z = fp.activations.back() * m.layers[l].w.transpose();
    z.rowwise() += m.layers[l].b.transpose();
    fp.preactivations.push_back(z);
    fp.activations.push_back(l + 1 < m.layers.size() ? relu(z) : z);
  }
  return fp;
}

}  // namespace

double batch_loss(const MlpModel& m, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
  if (inputs.rows() != targets.size() || inputs.rows() == 0) throw InputError("batch_loss: bad batch");
  const ForwardPass fp = forward_batch(m, inputs);
  return (fp.activations.back().col(0) - targets).squaredNorm() / static_cast<double>(targets.size());
}

Gradients gradient(const MlpModel& m, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
  if (inputs.rows() != targets.size() || inputs.rows() == 0) throw InputError("gradient: bad batch");
  if (inputs.cols() != m.input_size()) throw InputError("gradient: input dimension mismatch");
  const ForwardPass fp = forward_batch(m, inputs);
  const auto n_layers = m.layers.size();
  Gradients g;
  g.w.resize(n_layers);
  g.b.resize(n_layers);
  Eigen::MatrixXd delta = (2.0 / static_cast<double>(targets.size())) * (fp.activations.back().col(0) - targets);
  for (std::size_t l = n_layers; l-- > 0;) {
    g.w[l] = delta.transpose() * fp.activations[l];
    g.b[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * m.layers[l].w;
      const auto& z = fp.preactivations[l - 1];
      delta = back.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

namespace {

void fit_target(MlpModel& m, std::span<const Sample> samples) {
  m.target.transform = m.config.target;
  if (m.config.target == TargetTransform::None) return;
  std::vector<double> t;
  for (const auto& s : samples) {
    if (m.config.target == TargetTransform::Log && !(s.s_inf > 0.0)) {
      throw InputError("log target transform needs positive total action values");
    }
    t.push_back(m.config.target == TargetTransform::Log ? std::log(s.s_inf) : s.s_inf);
  }
  const double n = static_cast<double>(t.size());
  const double mean = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  m.target.mean = mean;
  m.target.stddev = sd > 1e-12 ? sd : 1.0;
}

}  // namespace

MlpModel train(const MlpConfig& cfg, std::span<const Sample> train_set, std::span<const Sample> validation_set,
               int reference_generator) {
  cfg.validate();
  if (train_set.size() < 2) throw InputError("training needs at least two samples");
  MlpModel m = MlpModel::initialize(cfg);
  m.n_y01 = static_cast<int>(train_set.front().y01.size());
  m.n_y02 = static_cast<int>(train_set.front().y02.size());
  m.n_dc = static_cast<int>(train_set.front().gamma.size());
  if (cfg.layers.front() != m.n_y01 + m.n_y02 + m.n_dc) {
    throw InputError(fmt::format("MLP input layer has {} neurons, features need {}", cfg.layers.front(),
                                 m.n_y01 + m.n_y02 + m.n_dc));
  }
  m.standardizer = fit_standardizer(train_set, reference_generator);
  fit_target(m, train_set);

  const Eigen::MatrixXd x = input_matrix(m, train_set);
  const Eigen::VectorXd t = target_vector(m, train_set);
  const bool has_val = !validation_set.empty();
  Eigen::MatrixXd xv;
  Eigen::VectorXd tv;
  if (has_val) {
    xv = input_matrix(m, validation_set);
    tv = target_vector(m, validation_set);
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<Eigen::MatrixXd> vel_w;
  std::vector<Eigen::VectorXd> vel_b;
  for (const auto& layer : m.layers) {
    vel_w.push_back(Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()));
    vel_b.push_back(Eigen::VectorXd::Zero(layer.b.size()));
  }

  std::vector<DenseLayer> best = m.layers;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int last_finite = 0;
  const auto batch = static_cast<Eigen::Index>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < x.rows(); start += batch) {
      const Eigen::Index len = std::min(batch, x.rows() - start);
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const Gradients g = gradient(m, x(idx, Eigen::all), t(idx));
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        vel_w[l] = cfg.momentum * vel_w[l] - cfg.learning_rate * g.w[l];
        vel_b[l] = cfg.momentum * vel_b[l] - cfg.learning_rate * g.b[l];
        m.layers[l].w += vel_w[l];
        m.layers[l].b += vel_b[l];
      }
    }
    const double train_loss = batch_loss(m, x, t);
    const double val_loss = has_val ? batch_loss(m, xv, tv) : train_loss;
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw DomainError(fmt::format("training diverged; last finite epoch {}", last_finite));
    }
    last_finite = epoch;
    m.meta.train_curve.push_back(train_loss);
    m.meta.validation_curve.push_back(has_val ? val_loss : std::numeric_limits<double>::quiet_NaN());
    m.meta.epochs_run = epoch;
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best_epoch = epoch;
      best = m.layers;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }
  m.layers = best;
  m.meta.best_epoch = best_epoch;
  m.meta.train_loss = batch_loss(m, x, t);
  m.meta.validation_loss = has_val ? batch_loss(m, xv, tv) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

CrossValidationResult cross_validate(std::span<const MlpConfig> configs, std::span<const Sample> samples, int n_folds,
                                     int n_validation, std::uint64_t seed, int reference_generator, int jobs) {
  if (configs.empty()) throw InputError("cross validation needs at least one configuration");
  CrossValidationResult out;
  out.scores.assign(configs.size(), 0.0);
  out.rotation_scores.assign(configs.size(), std::vector<double>(static_cast<std::size_t>(n_folds), 0.0));

  std::vector<FoldSplit> splits;
  for (int r = 0; r < n_folds; ++r) splits.push_back(make_folds(samples.size(), n_folds, n_validation, r, seed));

  const std::size_t n_tasks = configs.size() * static_cast<std::size_t>(n_folds);
  auto run = [&](std::size_t task) {
    const std::size_t ci = task / static_cast<std::size_t>(n_folds);
    const std::size_t r = task % static_cast<std::size_t>(n_folds);
    std::vector<Sample> tr;
    std::vector<Sample> va;
    for (auto idx : splits[r].train) tr.push_back(samples[idx]);
    for (auto idx : splits[r].validation) va.push_back(samples[idx]);
    double score = std::numeric_limits<double>::infinity();
    try {
      const MlpModel m = train(configs[ci], tr, va, reference_generator);
      score = loss(m, va);
      if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      score = std::numeric_limits<double>::infinity();
    }
    out.rotation_scores[ci][r] = score;
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) run(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n_tasks); ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < n_tasks; t = next++) run(t);
      });
    }
  }

  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    double sum = 0.0;
    for (double s : out.rotation_scores[ci]) sum += s;
    out.scores[ci] = std::isfinite(sum) ? sum / n_folds : std::numeric_limits<double>::infinity();
  }
  out.best = 0;
  for (std::size_t ci = 1; ci < configs.size(); ++ci) {
    if (out.scores[ci] < out.scores[out.best]) out.best = ci;
  }
  return out;
}

std::vector<double> predict_batch(const MlpModel& m, std::span<const double> y0) {
  if (m.n_dc < 1 || m.n_dc > 20) throw InputError("model has an invalid number of DCs");
  const std::uint32_t n = std::uint32_t{1} << m.n_dc;
  std::vector<double> out(n);
  for (std::uint32_t k = 0; k < n; ++k) out[k] = forward(m, model_input(m, y0, combination(k, m.n_dc)));
  return out;
}

}  // namespace tacoord
