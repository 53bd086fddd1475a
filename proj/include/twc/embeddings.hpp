#pragma once

// Word vectors in the GloVe text format: `token v1 ... vd` per line.

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "twc/error.hpp"
#include "twc/tensor.hpp"
#include "twc/text.hpp"

namespace twc {

inline const std::string kPadToken = "<pad>";

class Embeddings {
 public:
  Embeddings() = default;
  explicit Embeddings(std::size_t dim) : dim_(dim) {}

  static Embeddings parse(std::istream& in, const std::string& origin = "<embeddings>") {
    Embeddings e;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto parts = text::split_words(line);
      if (parts.empty()) continue;
      if (e.dim_ == 0) e.dim_ = parts.size() - 1;
      if (e.dim_ == 0 || parts.size() - 1 != e.dim_)
        throw InvalidDataset(origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(e.dim_) + " values");
      std::vector<double> v(e.dim_);
      for (std::size_t i = 0; i < e.dim_; ++i) {
        try {
          v[i] = std::stod(parts[i + 1]);
        } catch (const std::exception&) {
          throw InvalidDataset(origin + ":" + std::to_string(lineno) + ": bad number '" + parts[i + 1] + "'");
        }
      }
      e.add(parts[0], std::move(v));
    }
    if (e.dim_ == 0) throw InvalidDataset(origin + ": no vectors");
    return e;
  }

  static Embeddings load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embeddings '" + path + "'");
    return parse(in, path);
  }

  void add(const std::string& token, std::vector<double> v) {
    if (v.size() != dim_) throw ShapeMismatch("embedding for '" + token + "' has " + std::to_string(v.size()) + " values");
    vectors_[token] = std::move(v);
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(const std::string& token) const { return vectors_.contains(token); }

  // In-vocabulary vector; otherwise the mean of the known sub-tokens split
  // at '_', '-' and '\''; otherwise zeros. The pad token is always zeros.
  std::vector<double> lookup(const std::string& token) const {
    if (auto it = vectors_.find(token); it != vectors_.end()) return it->second;
    std::vector<double> acc(dim_, 0.0);
    if (token == kPadToken) return acc;
    std::size_t known = 0;
    std::string cur;
    auto flush = [&] {
      if (cur.empty()) return;
      if (auto it = vectors_.find(cur); it != vectors_.end()) {
        for (std::size_t i = 0; i < dim_; ++i) acc[i] += it->second[i];
        ++known;
      }
      cur.clear();
    };
    for (char c : token) {
      if (c == '_' || c == '-' || c == '\'') flush();
      else cur.push_back(c);
    }
    flush();
    if (known > 1)
      for (auto& x : acc) x /= static_cast<double>(known);
    return acc;
  }

  // Tokens as rows of an N x d constant matrix; empty input gives one pad row.
  tensor::Tensor sequence(const std::vector<std::string>& tokens) const {
    const std::vector<std::string> pad{kPadToken};
    const auto& toks = tokens.empty() ? pad : tokens;
    std::vector<double> data;
    data.reserve(toks.size() * dim_);
    for (const auto& t : toks) {
      auto v = lookup(t);
      data.insert(data.end(), v.begin(), v.end());
    }
    return tensor::Tensor::matrix(toks.size(), dim_, std::move(data));
  }

  // Averaged vector of the words of a concept name ("hat_rack" -> mean of
  // "hat" and "rack").
  std::vector<double> concept_vector(const std::string& name) const {
    auto words = text::split_char(name, '_');
    std::vector<double> acc(dim_, 0.0);
    std::size_t n = 0;
    for (const auto& w : words) {
      if (w.empty()) continue;
      auto v = lookup(w);
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += v[i];
      ++n;
    }
    if (n > 1)
      for (auto& x : acc) x /= static_cast<double>(n);
    return acc;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

}  // namespace twc
