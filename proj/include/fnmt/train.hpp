// Adam training loop with warmup, plateau learning-rate reduction and
// optional averaging of the best checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "fnmt/seq2seq.hpp"

namespace fnmt {

struct TrainOptions {
  int batch_size = 32;
  double learning_rate = 3e-4;
  int warmup_steps = 100;
  int max_steps = 1000;
  int checkpoint_interval = 100;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double lr_reduce_factor = 0.9;
  int lr_reduce_patience = 8;  // checkpoints without improvement; 0 disables
  int average_best = 0;        // average the k best checkpoints by validation perplexity
  double target_loss = 0.0;    // stop at the first checkpoint whose mean training loss is below this
  std::uint64_t seed = 1;

  [[nodiscard]] nlohmann::json to_json() const;
  static TrainOptions from_json(const nlohmann::json& j);
};

struct CurvePoint {
  int step = 0;
  double loss = 0.0;     // mean training loss since the previous checkpoint
  double val_ppl = 0.0;  // exp of the mean joint validation loss
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  int steps = 0;
  double final_loss = 0.0;
  bool reached_target = false;
};

template <typename T>
TrainResult train(FactoredSeq2Seq<T>& model, const std::vector<FactoredExample>& train_set,
                  const std::vector<FactoredExample>& valid_set, const TrainOptions& options);

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

extern template TrainResult train<float>(FactoredSeq2Seq<float>&, const std::vector<FactoredExample>&,
                                         const std::vector<FactoredExample>&, const TrainOptions&);
extern template TrainResult train<double>(FactoredSeq2Seq<double>&, const std::vector<FactoredExample>&,
                                          const std::vector<FactoredExample>&, const TrainOptions&);

}  // namespace fnmt
