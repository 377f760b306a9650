#include "fnmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace fnmt {

Vocab::Vocab() {
  for (auto name : kReservedNames) add(std::string(name));
}

Vocab Vocab::build(const std::vector<Sentence>& sentences) {
  std::map<std::string, std::size_t> freq;
  for (const auto& s : sentences)
    for (const auto& t : s) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [sym, n] : ordered) v.add(sym);
  return v;
}

Vocab Vocab::from_subword_model(const SubwordModel& model) {
  std::vector<std::pair<int, std::string>> by_id;
  for (const auto& [s, id] : model.vocab()) by_id.emplace_back(id, s);
  std::sort(by_id.begin(), by_id.end());
  Vocab v;
  for (const auto& [id, s] : by_id) v.add(s);
  return v;
}

int Vocab::add(const std::string& symbol) {
  auto it = ids_.find(symbol);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(symbols_.size());
  symbols_.push_back(symbol);
  ids_.emplace(symbol, id);
  return id;
}

int Vocab::id(std::string_view symbol) const {
  auto it = ids_.find(std::string(symbol));
  return it == ids_.end() ? ReservedSymbols::kUnk : it->second;
}

bool Vocab::contains(std::string_view symbol) const { return ids_.count(std::string(symbol)) > 0; }

const std::string& Vocab::symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < symbols_.size(); ++i) out << symbols_[i] << '\t' << i << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::pair<int, std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw Error("malformed vocab line '" + line + "'");
    rows.emplace_back(std::stoi(line.substr(tab + 1)), line.substr(0, tab));
  }
  std::sort(rows.begin(), rows.end());
  Vocab v;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<int>(i)) throw Error("vocab ids are not dense");
    if (i < static_cast<std::size_t>(ReservedSymbols::kCount)) {
      if (rows[i].second != kReservedNames[i]) throw Error("vocab reserved ids 0-3 mismatch");
      continue;
    }
    v.add(rows[i].second);
  }
  return v;
}

}  // namespace fnmt
