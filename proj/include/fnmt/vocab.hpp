#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fnmt/subword.hpp"
#include "fnmt/text.hpp"

namespace fnmt {

/// Dense symbol ids; 0-3 are PAD, BOS, EOS, UNK.
class Vocab {
 public:
  Vocab();

  /// Reserved symbols, then every symbol by descending frequency (ties by
  /// code point order).
  static Vocab build(const std::vector<Sentence>& sentences);
  static Vocab from_subword_model(const SubwordModel& model);

  [[nodiscard]] int id(std::string_view symbol) const;
  [[nodiscard]] bool contains(std::string_view symbol) const;
  [[nodiscard]] const std::string& symbol(int id) const;
  [[nodiscard]] int size() const { return static_cast<int>(symbols_.size()); }
  [[nodiscard]] const std::vector<std::string>& symbols() const { return symbols_; }

  int add(const std::string& symbol);

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace fnmt
