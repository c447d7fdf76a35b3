#include "probekit/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

namespace probekit {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void ProbeConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw std::invalid_argument("weight_decay must be >= 0");
  if (hidden_layers > 0 && hidden_width == 0)
    throw std::invalid_argument("hidden_width must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be >= 1");
  if (max_gradient_steps && *max_gradient_steps == 0)
    throw std::invalid_argument("max_gradient_steps must be >= 1 (omit it for no cap)");
}

std::size_t ProbeParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool ProbeParameters::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

std::vector<double> ProbeParameters::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void ProbeParameters::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count())
    throw std::invalid_argument("parameter vector has " + std::to_string(values.size()) +
                                " entries, expected " + std::to_string(parameter_count()));
  std::size_t k = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = values[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = values[k++];
  }
}

ProbeParameters ProbeParameters::zeros_like() const {
  ProbeParameters z;
  for (const auto& l : layers)
    z.layers.push_back({MatrixXd::Zero(l.weight.rows(), l.weight.cols()), VectorXd::Zero(l.bias.size())});
  return z;
}

bool ProbeParameters::operator==(const ProbeParameters& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size())
      return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

ProbeData materialize(const LabeledEmbeddingDataset& ds, const TargetSource& targets) {
  ProbeData data;
  data.input_dim = ds.embedding_dim;
  data.num_labels = ds.label_names.size();
  if (targets.kind == TargetSource::Kind::control_task && targets.task == nullptr)
    throw std::invalid_argument("control-task target source without an assignment");
  if (targets.kind == TargetSource::Kind::control_function) {
    if (targets.function == nullptr)
      throw std::invalid_argument("control-function target source without an assignment");
    if (targets.function->embedding_dim != ds.embedding_dim)
      throw ControlError("control vectors do not match the dataset width");
  }

  for (Split s : kAllSplits) {
    const auto idx = ds.indices(s);
    auto& x = data.inputs[static_cast<std::size_t>(s)];
    auto& y = data.labels[static_cast<std::size_t>(s)];
    x.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(ds.embedding_dim));
    y.resize(idx.size());
    for (std::size_t row = 0; row < idx.size(); ++row) {
      const std::size_t i = idx[row];
      const auto& rec = ds.records[i];
      const std::vector<double>* vec = &rec.vector;
      std::int64_t label = rec.label_id;
      if (targets.kind == TargetSource::Kind::control_task)
        label = targets.task->label_for(i, rec.type_id);
      else if (targets.kind == TargetSource::Kind::control_function)
        vec = &targets.function->vector_for(i, rec.type_id);
      for (std::size_t c = 0; c < ds.embedding_dim; ++c)
        x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = (*vec)[c];
      y[row] = static_cast<int>(label);
    }
  }
  return data;
}

ProbeParameters init_probe(const ProbeConfig& config, std::size_t input_dim, std::size_t num_labels) {
  if (input_dim == 0 || num_labels == 0)
    throw std::invalid_argument("probe dimensions must be positive");
  std::vector<std::size_t> sizes{input_dim};
  for (std::size_t l = 0; l < config.hidden_layers; ++l) sizes.push_back(config.hidden_width);
  sizes.push_back(num_labels);

  std::mt19937_64 rng(config.seed);
  ProbeParameters p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto fan_in = sizes[l];
    const auto fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> draw(-limit, limit);
    DenseLayer layer{MatrixXd(fan_out, fan_in), VectorXd::Zero(static_cast<Eigen::Index>(fan_out))};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = draw(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace {

void log_softmax_rows(MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
}

// Returns post-activation outputs of every layer; the last entry holds the
// log-probabilities.
std::vector<MatrixXd> forward_all(const ProbeParameters& params, const MatrixXd& inputs) {
  if (params.layers.empty()) throw std::invalid_argument("probe has no layers");
  if (static_cast<std::size_t>(inputs.cols()) != params.input_dim())
    throw std::invalid_argument("input width " + std::to_string(inputs.cols()) +
                                " does not match probe input " + std::to_string(params.input_dim()));
  std::vector<MatrixXd> acts;
  acts.reserve(params.layers.size());
  const MatrixXd* prev = &inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    MatrixXd z = *prev * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < params.layers.size())
      z = z.cwiseMax(0.0);
    else
      log_softmax_rows(z);
    if (!z.allFinite()) throw NumericalError("non-finite activation in layer " + std::to_string(l));
    acts.push_back(std::move(z));
    prev = &acts.back();
  }
  return acts;
}

}  // namespace

MatrixXd forward(const ProbeParameters& params, const MatrixXd& inputs) {
  return std::move(forward_all(params, inputs).back());
}

std::vector<double> forward_one(const ProbeParameters& params, std::span<const double> input) {
  MatrixXd x(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t c = 0; c < input.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = input[c];
  const MatrixXd out = forward(params, x);
  return {out.data(), out.data() + out.size()};
}

LossAndGradients loss_and_gradients(const ProbeParameters& params, const MatrixXd& inputs,
                                    std::span<const int> labels, double weight_decay) {
  const auto batch = static_cast<Eigen::Index>(labels.size());
  if (batch == 0) throw std::invalid_argument("empty batch");
  if (inputs.rows() != batch) throw std::invalid_argument("inputs and labels differ in length");

  const auto acts = forward_all(params, inputs);
  const MatrixXd& logp = acts.back();
  const auto num_labels = logp.cols();

  LossAndGradients out;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_labels) throw std::invalid_argument("label id out of range");
    nll -= logp(i, y);
  }
  out.loss = nll / static_cast<double>(batch);
  if (weight_decay > 0.0) {
    double sq = 0.0;
    for (const auto& l : params.layers) sq += l.weight.squaredNorm();
    out.loss += 0.5 * weight_decay * sq;
  }

  // d(mean NLL)/d(logits) = (softmax - onehot) / batch
  MatrixXd delta = logp.array().exp();
  for (Eigen::Index i = 0; i < batch; ++i) delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  delta /= static_cast<double>(batch);

  out.gradients.layers.resize(params.layers.size());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const MatrixXd& below = l == 0 ? inputs : acts[l - 1];
    auto& g = out.gradients.layers[l];
    g.weight = delta.transpose() * below;
    g.bias = delta.colwise().sum().transpose();
    if (weight_decay > 0.0) g.weight += weight_decay * params.layers[l].weight;
    if (!g.weight.allFinite() || !g.bias.allFinite())
      throw NumericalError("non-finite gradient in layer " + std::to_string(l));
    if (l > 0) {
      MatrixXd back = delta * params.layers[l].weight;
      delta = (acts[l - 1].array() > 0.0).select(back, 0.0);
    }
  }
  return out;
}

namespace {

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  ProbeParameters m, v;
  std::size_t t = 0;

  explicit AdamState(const ProbeParameters& p) : m(p.zeros_like()), v(p.zeros_like()) {}

  void step(ProbeParameters& p, const ProbeParameters& g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto update = [&](auto& param, const auto& grad, auto& mom, auto& var) {
      mom = beta1 * mom + (1.0 - beta1) * grad;
      var = beta2 * var + (1.0 - beta2) * grad.cwiseProduct(grad);
      param.array() -= lr * (mom.array() / c1) / ((var.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      update(p.layers[l].weight, g.layers[l].weight, m.layers[l].weight, v.layers[l].weight);
      update(p.layers[l].bias, g.layers[l].bias, m.layers[l].bias, v.layers[l].bias);
    }
  }
};

double split_loss(const ProbeParameters& params, const ProbeData& data, Split s) {
  return evaluate(params, data, s).cross_entropy;
}

double decay_penalty(const ProbeParameters& params, double weight_decay) {
  double sq = 0.0;
  for (const auto& l : params.layers) sq += l.weight.squaredNorm();
  return 0.5 * weight_decay * sq;
}

}  // namespace

TrainedProbe train(const ProbeConfig& config, const ProbeData& data) {
  config.validate();
  for (Split s : kAllSplits)
    if (data.y(s).empty())
      throw std::invalid_argument("empty split: " + std::string(split_name(s)));

  TrainedProbe out;
  out.config = config;
  ProbeParameters params = init_probe(config, data.input_dim, data.num_labels);
  AdamState adam(params);

  // Separate stream from initialization so the shuffle order does not depend
  // on how many parameters the architecture has.
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5eed));
  const auto& x_train = data.x(Split::train);
  const auto& y_train = data.y(Split::train);
  std::vector<int> order(y_train.size());
  std::iota(order.begin(), order.end(), 0);

  out.trace.push_back({0,
                       split_loss(params, data, Split::train) + decay_penalty(params, config.weight_decay),
                       split_loss(params, data, Split::dev)});
  out.params = params;
  out.best_dev_loss = out.trace.front().dev_loss;
  out.best_step = 0;

  const std::size_t step_cap = config.max_gradient_steps.value_or(std::numeric_limits<std::size_t>::max());
  std::size_t steps = 0;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < config.max_epochs && steps < step_cap; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size() && steps < step_cap; start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::vector<int> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(stop));
      const MatrixXd xb = x_train(rows, Eigen::all);
      batch_labels.clear();
      for (int r : rows) batch_labels.push_back(y_train[static_cast<std::size_t>(r)]);

      LossAndGradients lg;
      try {
        lg = loss_and_gradients(params, xb, batch_labels, config.weight_decay);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(steps + 1, std::string("diverged at step ") +
                                              std::to_string(steps + 1) + ": " + e.what());
      }
      if (!std::isfinite(lg.loss))
        throw TrainingDiverged(steps + 1, "non-finite loss at step " + std::to_string(steps + 1));
      adam.step(params, lg.gradients, config.learning_rate);
      ++steps;
      loss_sum += lg.loss;
      ++batches;
    }

    double dev = 0.0;
    try {
      dev = split_loss(params, data, Split::dev);
    } catch (const NumericalError& e) {
      throw TrainingDiverged(steps, std::string("diverged by step ") + std::to_string(steps) + ": " + e.what());
    }
    out.trace.push_back({steps, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)), dev});
    if (dev < out.best_dev_loss) {
      out.best_dev_loss = dev;
      out.best_step = steps;
      out.params = params;
    }
  }
  out.steps_taken = steps;
  return out;
}

TrainedProbe train(const ProbeConfig& config, const LabeledEmbeddingDataset& ds,
                   const TargetSource& targets) {
  return train(config, materialize(ds, targets));
}

EvalResult evaluate(const ProbeParameters& params, const ProbeData& data, Split split) {
  const auto& x = data.x(split);
  const auto& y = data.y(split);
  if (y.empty()) throw std::invalid_argument("empty split: " + std::string(split_name(split)));
  const MatrixXd logp = forward(params, x);
  double nll = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const int gold = y[static_cast<std::size_t>(i)];
    nll -= logp(i, gold);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logp.cols(); ++c)
      if (logp(i, c) > logp(i, best)) best = c;  // strict: ties go to the lowest index
    correct += (best == gold);
  }
  EvalResult r;
  r.token_count = y.size();
  r.cross_entropy = nll / static_cast<double>(y.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(y.size());
  return r;
}

EvalResult evaluate(const TrainedProbe& probe, const LabeledEmbeddingDataset& ds,
                    const TargetSource& targets, Split split) {
  return evaluate(probe.params, materialize(ds, targets), split);
}

// ---------------------------------------------------------------------------
// checkpoint dump

namespace {

json config_json(const ProbeConfig& c) {
  json j{{"hidden_layers", c.hidden_layers},
         {"hidden_width", c.hidden_width},
         {"learning_rate", c.learning_rate},
         {"weight_decay", c.weight_decay},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"seed", c.seed}};
  j["max_gradient_steps"] = c.max_gradient_steps ? json(*c.max_gradient_steps) : json(nullptr);
  return j;
}

ProbeConfig config_from_json(const json& j) {
  ProbeConfig c;
  c.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("max_gradient_steps").is_null())
    c.max_gradient_steps = j.at("max_gradient_steps").get<std::size_t>();
  return c;
}

}  // namespace

void save_probe(const TrainedProbe& probe, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  json m;
  m["format"] = "PRBPROBE1";
  m["config"] = config_json(probe.config);
  json shapes = json::array();
  for (const auto& l : probe.params.layers) shapes.push_back({l.weight.rows(), l.weight.cols()});
  m["shapes"] = shapes;
  m["parameter_count"] = probe.params.parameter_count();
  m["steps_taken"] = probe.steps_taken;
  m["best_step"] = probe.best_step;
  m["best_dev_loss"] = probe.best_dev_loss;
  json trace = json::array();
  for (const auto& t : probe.trace) trace.push_back({t.step, t.train_loss, t.dev_loss});
  m["trace"] = trace;
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
  write_f64_le(dir / "params.f64", probe.params.flatten());
}

TrainedProbe load_probe(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("missing file: " + (dir / "manifest.json").string());
  const json m = json::parse(in);
  if (m.value("format", "") != "PRBPROBE1")
    throw std::runtime_error((dir / "manifest.json").string() + ": not a probe checkpoint");
  TrainedProbe p;
  p.config = config_from_json(m.at("config"));
  for (const auto& s : m.at("shapes")) {
    const auto rows = s.at(0).get<Eigen::Index>();
    const auto cols = s.at(1).get<Eigen::Index>();
    p.params.layers.push_back({MatrixXd::Zero(rows, cols), VectorXd::Zero(rows)});
  }
  p.params.assign_flat(read_f64_le(dir / "params.f64"));
  p.steps_taken = m.at("steps_taken").get<std::size_t>();
  p.best_step = m.at("best_step").get<std::size_t>();
  p.best_dev_loss = m.at("best_dev_loss").get<double>();
  for (const auto& t : m.at("trace"))
    p.trace.push_back({t.at(0).get<std::size_t>(), t.at(1).get<double>(), t.at(2).get<double>()});
  return p;
}

}  // namespace probekit
