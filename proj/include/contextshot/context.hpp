#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "contextshot/autodiff.hpp"
#include "contextshot/embeddings.hpp"
#include "contextshot/rng.hpp"

namespace cshot {

// Scene context of one focal object: the ordered labels of surrounding
// objects and the d_w x n_s matrix whose columns are their word vectors.
struct ContextSet {
  std::vector<std::string> labels;
  Tensor matrix;

  static ContextSet from_labels(std::vector<std::string> labels, const WordTable& words);
  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

// Class-conditioned context attention projections. No bias terms.
struct CcamParams {
  Parameter wk, wq;

  static CcamParams init(std::size_t d_c, std::size_t d_w, Rng& rng);
  std::size_t attention_dim() const { return wk.value.rows(); }
  std::vector<Parameter*> parameters() { return {&wk, &wq}; }
};

struct AttentionResult {
  Tensor weights;
  Tensor pooled;
  // (label, weight) sorted by descending weight; ties keep input order.
  std::vector<std::pair<std::string, double>> ranked;
};

struct AttentionVars {
  Var weights;
  Var pooled;
};

// Raw attention logits (W_K S)^T (W_Q w) / sqrt(d_c).
Tensor ccam_scores(const Tensor& s, const Tensor& w, const CcamParams& p);

// Throws EmptyContextError when n_s == 0.
AttentionResult ccam_attend(const ContextSet& s, const Tensor& w, const CcamParams& p);
AttentionVars ccam_attend(Var s, Var w, const CcamParams& p);

Tensor context_average(const ContextSet& s);
Var context_average(Var s);

enum class ContextSource { Train, Test, Union };

ContextSource parse_context_source(const std::string& name);
std::string to_string(ContextSource source);

// Membership of labels in the train/test class partition.
struct ClassPartition {
  std::unordered_set<std::string> train;
  std::unordered_set<std::string> test;
};

// Keeps labels whose partition membership matches `source`, in order.
std::vector<std::string> select_context(std::span<const std::string> labels, ContextSource source,
                                        const ClassPartition& partition);

// Replaces each label with probability p_noise by a uniformly drawn,
// different label from `vocab`.
std::vector<std::string> inject_noise(std::span<const std::string> labels, double p_noise,
                                      std::span<const std::string> vocab, Rng& rng);

}  // namespace cshot
