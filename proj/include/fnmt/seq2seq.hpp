// Factored transformer encoder-decoder. Word and factor embeddings are
// summed at the input; each target stream has its own output layer; target
// factors are time-shifted by one position relative to the words.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fnmt/factorize.hpp"
#include "fnmt/nn.hpp"
#include "fnmt/vocab.hpp"

namespace fnmt {

/// Label id 0 of every factor stream is SHIFT; real labels are 1..n.
inline constexpr int kShiftLabel = 0;

struct StreamSpec {
  std::string name;
  int labels = 0;  // excluding SHIFT
  friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int ff_dim = 128;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int max_len = 100;
  bool source_factors = false;
  bool target_factors = false;
  std::vector<StreamSpec> factor_streams;
  bool tie_embeddings = true;
  std::string factor_embed_combination = "sum";

  void validate() const;
  [[nodiscard]] int num_source_streams() const { return source_factors ? static_cast<int>(factor_streams.size()) : 0; }
  [[nodiscard]] int num_target_streams() const { return target_factors ? static_cast<int>(factor_streams.size()) : 0; }
  /// Output size of factor stream s, SHIFT included.
  [[nodiscard]] int stream_size(std::size_t s) const { return factor_streams.at(s).labels + 1; }

  [[nodiscard]] nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Full-size setup: 20 encoder layers, 2 decoder layers, width 512.
ModelConfig deep_encoder_config(int vocab_size);

/// One sentence pair in id space.
struct FactoredExample {
  std::vector<int> source;                             // words + EOS
  std::vector<std::vector<int>> source_factors;        // [stream][pos], EOS carries SHIFT
  std::vector<int> target_in;                          // BOS w1 .. wn
  std::vector<int> target_out;                         // w1 .. wn EOS
  std::vector<std::vector<int>> factor_in;             // [stream]: SHIFT SHIFT f(w1) .. f(w_{n-1})
  std::vector<std::vector<int>> factor_out;            // [stream]: SHIFT f(w1) .. f(wn)
};

/// Padded [batch x length] id matrices. factor_out[s](b, t) holds the
/// factor of target_out(b, t-1); column 0 holds SHIFT.
struct FactoredBatch {
  Eigen::MatrixXi source_ids;
  std::vector<Eigen::MatrixXi> source_factors;
  Eigen::MatrixXi target_in;
  Eigen::MatrixXi target_out;
  std::vector<Eigen::MatrixXi> factor_in;
  std::vector<Eigen::MatrixXi> factor_out;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> target_mask;
  std::vector<int> source_lengths;
  std::vector<int> target_lengths;
  std::size_t truncated = 0;
  std::size_t unknown = 0;

  [[nodiscard]] int size() const { return static_cast<int>(source_lengths.size()); }
  [[nodiscard]] FactoredExample example(int row) const;
  [[nodiscard]] std::size_t positions() const;
};

struct FactoredPair {
  FactoredSentence source;
  FactoredSentence target;
};

FactoredExample make_example(const FactoredPair& pair, const Vocab& vocab, const ModelConfig& config,
                             std::size_t* truncated = nullptr, std::size_t* unknown = nullptr);
FactoredBatch build_batch(const std::vector<FactoredPair>& pairs, const Vocab& vocab,
                          const ModelConfig& config);
FactoredBatch build_batch(const std::vector<FactoredExample>& examples);

struct LossResult {
  double total = 0.0;               // mean over positions of summed stream CE
  std::vector<double> per_stream;   // [0] = word, then target factor streams
  std::size_t positions = 0;
};

template <typename T>
class FactoredSeq2Seq {
 public:
  using Mat = nn::Matrix<T>;
  /// Per stream (word first), one [target_len x labels] matrix per example.
  using BatchLogits = std::vector<std::vector<Mat>>;
  using Snapshot = std::map<std::string, Mat>;

  explicit FactoredSeq2Seq(ModelConfig config, std::uint64_t seed = 1);
  FactoredSeq2Seq(FactoredSeq2Seq&&) noexcept;
  FactoredSeq2Seq& operator=(FactoredSeq2Seq&&) noexcept;
  FactoredSeq2Seq(const FactoredSeq2Seq&) = delete;
  FactoredSeq2Seq& operator=(const FactoredSeq2Seq&) = delete;
  ~FactoredSeq2Seq();

  [[nodiscard]] FactoredSeq2Seq clone() const;

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  nn::ParameterSet<T>& parameters() { return params_; }
  const nn::ParameterSet<T>& parameters() const { return params_; }
  [[nodiscard]] std::size_t parameter_count() const { return params_.count(); }

  Mat& source_word_embedding();
  Mat& target_word_embedding();
  /// [vocab x embed]; shares storage with the target embedding when tied.
  Mat& output_projection();
  const Mat& target_word_embedding() const;
  Mat& factor_embedding(bool target_side, std::size_t stream);

  [[nodiscard]] Mat encode(const std::vector<int>& source,
                           const std::vector<std::vector<int>>& source_factors) const;
  /// Per-stream logits for every decoder position.
  [[nodiscard]] std::vector<Mat> decode(const Mat& memory, const std::vector<int>& target_in,
                                        const std::vector<std::vector<int>>& factor_in) const;
  [[nodiscard]] std::vector<Mat> forward(const FactoredExample& example) const;
  [[nodiscard]] BatchLogits forward(const FactoredBatch& batch) const;

  [[nodiscard]] LossResult loss(const FactoredBatch& batch) const;
  /// Adds d(loss)/d(theta) to every parameter's grad and returns the loss.
  LossResult accumulate_gradients(const FactoredBatch& batch);

  [[nodiscard]] Snapshot snapshot() const;
  void restore(const Snapshot& snapshot);

  void save(const std::filesystem::path& path) const;
  static FactoredSeq2Seq load(const std::filesystem::path& path);

 private:
  struct Impl;
  void build(std::uint64_t seed);

  ModelConfig config_;
  nn::ParameterSet<T> params_;
  std::unique_ptr<Impl> impl_;
};

/// Cross-entropy of each row of logits against targets, summed.
template <typename T>
double cross_entropy_sum(const nn::Matrix<T>& logits, const std::vector<int>& targets);

/// Cosine of the centroids of two groups of embedding rows.
template <typename T>
double embedding_centroid_similarity(const nn::Matrix<T>& table, const std::vector<int>& group_a,
                                     const std::vector<int>& group_b);

extern template class FactoredSeq2Seq<float>;
extern template class FactoredSeq2Seq<double>;

}  // namespace fnmt
