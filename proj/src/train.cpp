#include "fnmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fnmt/random.hpp"

namespace fnmt {

nlohmann::json TrainOptions::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"warmup_steps", warmup_steps},
          {"max_steps", max_steps},
          {"checkpoint_interval", checkpoint_interval},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"clip_norm", clip_norm},
          {"lr_reduce_factor", lr_reduce_factor},
          {"lr_reduce_patience", lr_reduce_patience},
          {"average_best", average_best},
          {"target_loss", target_loss},
          {"seed", seed}};
}

TrainOptions TrainOptions::from_json(const nlohmann::json& j) {
  TrainOptions o;
  const TrainOptions d;
  o.batch_size = j.value("batch_size", d.batch_size);
  o.learning_rate = j.value("learning_rate", d.learning_rate);
  o.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  o.max_steps = j.value("max_steps", d.max_steps);
  o.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
  o.beta1 = j.value("beta1", d.beta1);
  o.beta2 = j.value("beta2", d.beta2);
  o.epsilon = j.value("epsilon", d.epsilon);
  o.clip_norm = j.value("clip_norm", d.clip_norm);
  o.lr_reduce_factor = j.value("lr_reduce_factor", d.lr_reduce_factor);
  o.lr_reduce_patience = j.value("lr_reduce_patience", d.lr_reduce_patience);
  o.average_best = j.value("average_best", d.average_best);
  o.target_loss = j.value("target_loss", d.target_loss);
  o.seed = j.value("seed", d.seed);
  return o;
}

namespace {

template <typename T>
class Adam {
 public:
  Adam(nn::ParameterSet<T>& params, const TrainOptions& o) : params_(params), o_(o) {
    for (auto& [name, p] : params.all()) {
      m_.emplace(name, nn::Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      v_.emplace(name, nn::Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(o_.beta1, t_);
    const double c2 = 1.0 - std::pow(o_.beta2, t_);
    const T b1 = static_cast<T>(o_.beta1), b2 = static_cast<T>(o_.beta2);
    const T step = static_cast<T>(lr / c1);
    const T eps = static_cast<T>(o_.epsilon);
    const T root_c2 = static_cast<T>(std::sqrt(c2));
    for (auto& [name, p] : params_.all()) {
      auto& m = m_.at(name);
      auto& v = v_.at(name);
      m = b1 * m + (T(1) - b1) * p.grad;
      v = b2 * v + (T(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step * m.array() / (v.array().sqrt() / root_c2 + eps);
    }
  }

 private:
  nn::ParameterSet<T>& params_;
  const TrainOptions& o_;
  std::map<std::string, nn::Matrix<T>> m_, v_;
  int t_ = 0;
};

template <typename T>
double clip_gradients(nn::ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [_, p] : params.all()) sq += static_cast<double>(p.grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& [_, p] : params.all()) p.grad *= scale;
  }
  return norm;
}

template <typename T>
double validation_perplexity(const FactoredSeq2Seq<T>& model, const std::vector<FactoredExample>& valid) {
  if (valid.empty()) return 0.0;
  double total = 0.0;
  std::size_t positions = 0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < valid.size(); i += kChunk) {
    std::vector<FactoredExample> part(valid.begin() + static_cast<std::ptrdiff_t>(i),
                                      valid.begin() + static_cast<std::ptrdiff_t>(std::min(valid.size(), i + kChunk)));
    const FactoredBatch b = build_batch(part);
    const LossResult r = model.loss(b);
    total += r.total * static_cast<double>(r.positions);
    positions += r.positions;
  }
  return std::exp(total / static_cast<double>(positions));
}

}  // namespace

template <typename T>
TrainResult train(FactoredSeq2Seq<T>& model, const std::vector<FactoredExample>& train_set,
                  const std::vector<FactoredExample>& valid_set, const TrainOptions& options) {
  if (train_set.empty()) throw Error("empty training set");
  if (options.batch_size < 1) throw Error("batch_size must be positive");
  auto& params = model.parameters();
  Adam<T> adam(params, options);
  Rng rng(options.seed);

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();

  double lr_scale = 1.0;
  double best_ppl = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double interval_loss = 0.0;
  int interval_steps = 0;
  std::vector<std::pair<double, typename FactoredSeq2Seq<T>::Snapshot>> kept;
  const int interval = std::max(1, options.checkpoint_interval);

  for (int step = 1; step <= options.max_steps; ++step) {
    std::vector<FactoredExample> chunk;
    chunk.reserve(static_cast<std::size_t>(options.batch_size));
    while (static_cast<int>(chunk.size()) < options.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_index(rng, i))]);
        cursor = 0;
      }
      chunk.push_back(train_set[order[cursor++]]);
      if (static_cast<int>(chunk.size()) >= static_cast<int>(train_set.size())) break;
    }
    const FactoredBatch batch = build_batch(chunk);
    params.zero_grad();
    const LossResult r = model.accumulate_gradients(batch);
    if (!std::isfinite(r.total))
      throw Error("training diverged at step " + std::to_string(step) + " (loss " +
                  std::to_string(r.total) + ")");
    clip_gradients(params, options.clip_norm);
    const double warm = options.warmup_steps > 0
                            ? std::min(1.0, static_cast<double>(step) / options.warmup_steps)
                            : 1.0;
    adam.step(options.learning_rate * warm * lr_scale);
    interval_loss += r.total;
    ++interval_steps;
    result.steps = step;

    const bool last = step == options.max_steps;
    if (step % interval == 0 || last) {
      CurvePoint point{step, interval_loss / interval_steps, validation_perplexity(model, valid_set)};
      result.curve.push_back(point);
      result.final_loss = point.loss;
      interval_loss = 0.0;
      interval_steps = 0;

      if (!valid_set.empty()) {
        if (point.val_ppl < best_ppl) {
          best_ppl = point.val_ppl;
          since_best = 0;
        } else if (options.lr_reduce_patience > 0 && ++since_best >= options.lr_reduce_patience) {
          lr_scale *= options.lr_reduce_factor;
          since_best = 0;
        }
        if (options.average_best > 0) {
          kept.emplace_back(point.val_ppl, model.snapshot());
          std::stable_sort(kept.begin(), kept.end(),
                           [](const auto& a, const auto& b) { return a.first < b.first; });
          if (static_cast<int>(kept.size()) > options.average_best) kept.pop_back();
        }
      }
      if (options.target_loss > 0.0 && point.loss < options.target_loss) {
        result.reached_target = true;
        break;
      }
    }
  }

  if (options.average_best > 0 && !kept.empty()) {
    typename FactoredSeq2Seq<T>::Snapshot mean = kept.front().second;
    for (std::size_t i = 1; i < kept.size(); ++i)
      for (auto& [name, value] : mean) value += kept[i].second.at(name);
    for (auto& [name, value] : mean) value /= static_cast<T>(kept.size());
    model.restore(mean);
  }
  return result;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,loss,val_ppl\n";
  out << std::setprecision(9);
  for (const auto& p : curve) out << p.step << ',' << p.loss << ',' << p.val_ppl << '\n';
}

template TrainResult train<float>(FactoredSeq2Seq<float>&, const std::vector<FactoredExample>&,
                                  const std::vector<FactoredExample>&, const TrainOptions&);
template TrainResult train<double>(FactoredSeq2Seq<double>&, const std::vector<FactoredExample>&,
                                   const std::vector<FactoredExample>&, const TrainOptions&);

}  // namespace fnmt
