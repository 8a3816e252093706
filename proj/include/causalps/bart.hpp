#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "causalps/dataset.hpp"
#include "causalps/rng.hpp"
#include "causalps/stats.hpp"
#include "causalps/treatment_models.hpp"

namespace causalps {

struct BartConfig {
  int num_trees = 200;       // R
  double depth_base = 0.95;  // a in the node-depth prior a(1+d)^-b
  double depth_power = 2.0;  // b
  double leaf_scale_c = 2.0; // c; leaf prior sd = 3 / (c sqrt(R))
  int iterations = 1000;     // retained sweeps (before thinning)
  int burn_in = 500;
  int thin = 1;
  std::uint64_t seed = 0;

  double sigma_mu() const {
    return 3.0 / (leaf_scale_c * std::sqrt(static_cast<double>(num_trees)));
  }

  void check() const {
    if (num_trees < 1) throw std::invalid_argument("BartConfig: num_trees >= 1");
    if (!(depth_base > 0.0 && depth_base < 1.0))
      throw std::invalid_argument("BartConfig: depth_base in (0,1)");
    if (depth_power < 0.0)
      throw std::invalid_argument("BartConfig: depth_power >= 0");
    if (leaf_scale_c <= 0.0)
      throw std::invalid_argument("BartConfig: leaf_scale_c > 0");
    if (iterations < 1 || burn_in < 0 || thin < 1)
      throw std::invalid_argument("BartConfig: bad Gibbs budgets");
  }
};

struct TreeNode {
  int parent = -1;
  int left = -1, right = -1;  // -1 on both = leaf
  int split_var = -1;
  double split_value = 0.0;
  double mu = 0.0;
  int depth = 0;

  bool is_leaf() const { return left < 0; }
};

// Binary regression tree over a node pool with slot reuse, so repeated
// grow/prune cycles do not leak slots. Only nodes reachable from the root
// are live.
struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<int> free_slots;

  static Tree single_leaf() {
    Tree t;
    t.nodes.push_back(TreeNode{});
    return t;
  }

  int alloc() {
    if (!free_slots.empty()) {
      const int idx = free_slots.back();
      free_slots.pop_back();
      nodes[static_cast<std::size_t>(idx)] = TreeNode{};
      return idx;
    }
    nodes.push_back(TreeNode{});
    return static_cast<int>(nodes.size()) - 1;
  }

  // x is routed left when x[split_var] <= split_value.
  int leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int idx = 0;
    while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
      const auto& nd = nodes[static_cast<std::size_t>(idx)];
      idx = x[nd.split_var] <= nd.split_value ? nd.left : nd.right;
    }
    return idx;
  }

  void collect(int idx, std::vector<int>& internal, std::vector<int>& leaves) const {
    const auto& nd = nodes[static_cast<std::size_t>(idx)];
    if (nd.is_leaf()) {
      leaves.push_back(idx);
      return;
    }
    internal.push_back(idx);
    collect(nd.left, internal, leaves);
    collect(nd.right, internal, leaves);
  }

  std::vector<int> leaf_indices() const {
    std::vector<int> internal, leaves;
    collect(0, internal, leaves);
    return leaves;
  }

  std::vector<int> internal_indices() const {
    std::vector<int> internal, leaves;
    collect(0, internal, leaves);
    return internal;
  }

  // internal nodes whose children are both leaves (prunable)
  std::vector<int> nog_indices() const {
    std::vector<int> out;
    for (int idx : internal_indices()) {
      const auto& nd = nodes[static_cast<std::size_t>(idx)];
      if (nodes[static_cast<std::size_t>(nd.left)].is_leaf() &&
          nodes[static_cast<std::size_t>(nd.right)].is_leaf())
        out.push_back(idx);
    }
    return out;
  }

  int max_depth() const {
    int best = 0;
    for (int idx : leaf_indices())
      best = std::max(best, nodes[static_cast<std::size_t>(idx)].depth);
    return best;
  }
};

struct BartForest {
  std::vector<Tree> trees;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double sum = 0.0;
    for (const auto& t : trees)
      sum += t.nodes[static_cast<std::size_t>(t.leaf_for(x))].mu;
    return sum;
  }
};

// Observed unique values per variable; split proposals draw uniformly from
// these.
struct SplitSupport {
  std::vector<std::vector<double>> values;

  static SplitSupport from_data(const Eigen::MatrixXd& c) {
    SplitSupport s;
    s.values.resize(static_cast<std::size_t>(c.cols()));
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      std::vector<double> v(c.col(j).data(), c.col(j).data() + c.rows());
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      s.values[static_cast<std::size_t>(j)] = std::move(v);
    }
    return s;
  }

  int num_vars() const { return static_cast<int>(values.size()); }
  int num_values(int var) const {
    return static_cast<int>(values[static_cast<std::size_t>(var)].size());
  }
};

inline double depth_split_prob(int depth, const BartConfig& cfg) {
  return cfg.depth_base * std::pow(1.0 + depth, -cfg.depth_power);
}

// Log prior of the tree: each internal node contributes log a(1+d)^-b plus
// its uniform split choice, each leaf contributes log(1 - a(1+d)^-b). Pass
// the split support to include the choice terms; without it only the depth
// structure is scored.
inline double tree_log_prior(const Tree& t, const BartConfig& cfg,
                             const SplitSupport* support = nullptr) {
  cfg.check();
  std::vector<int> internal, leaves;
  t.collect(0, internal, leaves);
  double lp = 0.0;
  for (int idx : internal) {
    const auto& nd = t.nodes[static_cast<std::size_t>(idx)];
    const double ps = depth_split_prob(nd.depth, cfg);
    lp += ps > 0.0 ? std::log(ps) : -std::numeric_limits<double>::infinity();
    if (support) {
      lp -= std::log(static_cast<double>(support->num_vars()));
      lp -= std::log(static_cast<double>(support->num_values(nd.split_var)));
    }
  }
  for (int idx : leaves) {
    const auto& nd = t.nodes[static_cast<std::size_t>(idx)];
    lp += std::log(1.0 - depth_split_prob(nd.depth, cfg));
  }
  return lp;
}

// Max leaf depth of a tree drawn from the structural prior alone.
inline int sample_tree_depth_from_prior(const BartConfig& cfg, Rng& rng,
                                        int depth_guard = 64) {
  struct Walker {
    const BartConfig& cfg;
    Rng& rng;
    int guard;
    int walk(int depth) {
      if (depth >= guard) return depth;
      if (rng.uniform() < depth_split_prob(depth, cfg))
        return std::max(walk(depth + 1), walk(depth + 1));
      return depth;
    }
  };
  Walker w{cfg, rng, depth_guard};
  return w.walk(0);
}

// Albert-Chib style latent utility update: z_i ~ N(fit_i, 1) truncated to
// the side implied by the observed treatment.
inline Eigen::VectorXd probit_latent_step(const Eigen::VectorXd& fit,
                                          const std::vector<int>& x, Rng& rng) {
  if (static_cast<std::size_t>(fit.size()) != x.size())
    throw std::invalid_argument("probit_latent_step: size mismatch");
  Eigen::VectorXd z(fit.size());
  for (Eigen::Index i = 0; i < fit.size(); ++i) {
    if (!std::isfinite(fit[i]))
      throw std::invalid_argument("probit_latent_step: non-finite fit");
    z[i] = x[static_cast<std::size_t>(i)] == 1
               ? rng.truncated_normal_above(fit[i], 1.0, 0.0)
               : rng.truncated_normal_below(fit[i], 1.0, 0.0);
  }
  return z;
}

namespace detail {

// Marginal-likelihood contribution of a leaf with `count` residuals summing
// to `sum`, unit residual variance, leaf prior N(0, sigma_mu^2). Terms not
// depending on the partition are dropped (they cancel in every MH ratio).
inline double leaf_ml_term(double count, double sum, double sigma_mu2) {
  const double denom = sigma_mu2 * count + 1.0;
  return -0.5 * std::log(denom) + 0.5 * sigma_mu2 * sum * sum / denom;
}

struct MoveProbs {
  double grow, prune, change;
};

inline MoveProbs move_probs(const Tree& t) {
  if (t.nodes[0].is_leaf()) return {1.0, 0.0, 0.0};
  return {0.35, 0.35, 0.30};
}

// One tree's Metropolis-within-Gibbs update against partial residuals.
class TreeSampler {
 public:
  TreeSampler(const Eigen::MatrixXd& c, const SplitSupport& support,
              const BartConfig& cfg)
      : c_(c), support_(support), cfg_(cfg), sigma_mu2_(cfg.sigma_mu() * cfg.sigma_mu()) {}

  // Applies grow/prune/change, then redraws every leaf value. `leaf_of`
  // holds the current leaf slot for each observation and is kept in sync.
  void update(Tree& t, std::vector<int>& leaf_of,
              const Eigen::VectorXd& partial_resid, Rng& rng) const {
    const MoveProbs probs = move_probs(t);
    const double u = rng.uniform();
    if (u < probs.grow) {
      try_grow(t, leaf_of, partial_resid, rng);
    } else if (u < probs.grow + probs.prune) {
      try_prune(t, leaf_of, partial_resid, rng);
    } else {
      try_change(t, leaf_of, partial_resid, rng);
    }
    draw_leaves(t, leaf_of, partial_resid, rng);
  }

 private:
  void try_grow(Tree& t, std::vector<int>& leaf_of,
                const Eigen::VectorXd& r, Rng& rng) const {
    const auto leaves = t.leaf_indices();
    const int leaf = leaves[rng.uniform_int(leaves.size())];
    const int var = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(support_.num_vars())));
    const auto& vals = support_.values[static_cast<std::size_t>(var)];
    const double cut = vals[rng.uniform_int(vals.size())];

    double c_left = 0, s_left = 0, c_right = 0, s_right = 0;
    for (std::size_t i = 0; i < leaf_of.size(); ++i) {
      if (leaf_of[i] != leaf) continue;
      if (c_(static_cast<Eigen::Index>(i), var) <= cut) {
        c_left += 1;
        s_left += r[static_cast<Eigen::Index>(i)];
      } else {
        c_right += 1;
        s_right += r[static_cast<Eigen::Index>(i)];
      }
    }
    if (c_left == 0 || c_right == 0) return;  // empty child: reject

    const int d = t.nodes[static_cast<std::size_t>(leaf)].depth;
    const double p_split_d = depth_split_prob(d, cfg_);
    const double p_split_d1 = depth_split_prob(d + 1, cfg_);
    const double log_ml =
        leaf_ml_term(c_left, s_left, sigma_mu2_) +
        leaf_ml_term(c_right, s_right, sigma_mu2_) -
        leaf_ml_term(c_left + c_right, s_left + s_right, sigma_mu2_);
    // structure prior: leaf -> internal with two depth d+1 leaves; the
    // uniform split-choice prior cancels against the forward proposal
    const double log_prior = std::log(p_split_d) - std::log(1.0 - p_split_d) +
                             2.0 * std::log(1.0 - p_split_d1);
    const int n_nog_new = count_nog_after_grow(t, leaf);
    const MoveProbs probs_new = move_probs_after_grow();
    const double log_proposal =
        std::log(probs_new.prune) - std::log(static_cast<double>(n_nog_new)) -
        std::log(move_probs(t).grow) + std::log(static_cast<double>(leaves.size()));

    if (std::log(rng.uniform()) >= log_ml + log_prior + log_proposal) return;

    const int li = t.alloc();
    const int ri = t.alloc();
    auto& parent = t.nodes[static_cast<std::size_t>(leaf)];
    parent.left = li;
    parent.right = ri;
    parent.split_var = var;
    parent.split_value = cut;
    t.nodes[static_cast<std::size_t>(li)].parent = leaf;
    t.nodes[static_cast<std::size_t>(li)].depth = parent.depth + 1;
    t.nodes[static_cast<std::size_t>(ri)].parent = leaf;
    t.nodes[static_cast<std::size_t>(ri)].depth = parent.depth + 1;
    for (std::size_t i = 0; i < leaf_of.size(); ++i) {
      if (leaf_of[i] != leaf) continue;
      leaf_of[i] = c_(static_cast<Eigen::Index>(i), var) <= cut ? li : ri;
    }
  }

  void try_prune(Tree& t, std::vector<int>& leaf_of,
                 const Eigen::VectorXd& r, Rng& rng) const {
    const auto nog = t.nog_indices();
    if (nog.empty()) return;
    const int node = nog[rng.uniform_int(nog.size())];
    const auto& nd = t.nodes[static_cast<std::size_t>(node)];
    const int li = nd.left, ri = nd.right;

    double c_left = 0, s_left = 0, c_right = 0, s_right = 0;
    for (std::size_t i = 0; i < leaf_of.size(); ++i) {
      if (leaf_of[i] == li) {
        c_left += 1;
        s_left += r[static_cast<Eigen::Index>(i)];
      } else if (leaf_of[i] == ri) {
        c_right += 1;
        s_right += r[static_cast<Eigen::Index>(i)];
      }
    }
    const double log_ml =
        leaf_ml_term(c_left + c_right, s_left + s_right, sigma_mu2_) -
        leaf_ml_term(c_left, s_left, sigma_mu2_) -
        leaf_ml_term(c_right, s_right, sigma_mu2_);
    const double p_split_d = depth_split_prob(nd.depth, cfg_);
    const double p_split_d1 = depth_split_prob(nd.depth + 1, cfg_);
    const double log_prior = std::log(1.0 - p_split_d) - std::log(p_split_d) -
                             2.0 * std::log(1.0 - p_split_d1);
    // reverse move is the grow that recreates this split; its split-choice
    // proposal cancels against the split-choice prior being removed
    Tree after = t;  // cheap: tens of nodes
    after.nodes[static_cast<std::size_t>(node)].left = -1;
    after.nodes[static_cast<std::size_t>(node)].right = -1;
    const int n_leaves_new = static_cast<int>(after.leaf_indices().size());
    const double log_proposal =
        std::log(move_probs(after).grow) -
        std::log(static_cast<double>(n_leaves_new)) -
        std::log(move_probs(t).prune) + std::log(static_cast<double>(nog.size()));

    if (std::log(rng.uniform()) >= log_ml + log_prior + log_proposal) return;

    auto& parent = t.nodes[static_cast<std::size_t>(node)];
    parent.left = -1;
    parent.right = -1;
    parent.split_var = -1;
    t.free_slots.push_back(li);
    t.free_slots.push_back(ri);
    for (std::size_t i = 0; i < leaf_of.size(); ++i)
      if (leaf_of[i] == li || leaf_of[i] == ri) leaf_of[i] = node;
  }

  void try_change(Tree& t, std::vector<int>& leaf_of,
                  const Eigen::VectorXd& r, Rng& rng) const {
    const auto internal = t.internal_indices();
    if (internal.empty()) return;
    const int node = internal[rng.uniform_int(internal.size())];
    const int var = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(support_.num_vars())));
    const auto& vals = support_.values[static_cast<std::size_t>(var)];
    const double cut = vals[rng.uniform_int(vals.size())];

    // leaves under the node, and the observations currently routed there
    std::vector<int> internal_below, leaves_below;
    t.collect(node, internal_below, leaves_below);
    std::vector<char> is_below(t.nodes.size(), 0);
    for (int idx : leaves_below) is_below[static_cast<std::size_t>(idx)] = 1;

    auto leaf_slot = [&](int idx) {
      return static_cast<std::size_t>(
          std::find(leaves_below.begin(), leaves_below.end(), idx) -
          leaves_below.begin());
    };
    std::vector<double> c_old(leaves_below.size(), 0), s_old(leaves_below.size(), 0);
    std::vector<double> c_new(leaves_below.size(), 0), s_new(leaves_below.size(), 0);
    std::vector<std::pair<std::size_t, int>> moved;  // (obs, new leaf)
    for (std::size_t i = 0; i < leaf_of.size(); ++i) {
      if (!is_below[static_cast<std::size_t>(leaf_of[i])]) continue;
      const std::size_t old_slot = leaf_slot(leaf_of[i]);
      c_old[old_slot] += 1;
      s_old[old_slot] += r[static_cast<Eigen::Index>(i)];
      const int new_leaf = route_with_override(t, node, var, cut,
                                               c_.row(static_cast<Eigen::Index>(i)));
      const std::size_t new_slot = leaf_slot(new_leaf);
      c_new[new_slot] += 1;
      s_new[new_slot] += r[static_cast<Eigen::Index>(i)];
      moved.emplace_back(i, new_leaf);
    }
    for (double c : c_new)
      if (c == 0) return;  // empty leaf under the new rule: reject

    // symmetric proposal; split-choice prior terms cancel exactly
    double log_ml = 0.0;
    for (std::size_t l = 0; l < leaves_below.size(); ++l)
      log_ml += leaf_ml_term(c_new[l], s_new[l], sigma_mu2_) -
                leaf_ml_term(c_old[l], s_old[l], sigma_mu2_);

    if (std::log(rng.uniform()) >= log_ml) return;

    auto& nd = t.nodes[static_cast<std::size_t>(node)];
    nd.split_var = var;
    nd.split_value = cut;
    for (const auto& [i, new_leaf] : moved) leaf_of[i] = new_leaf;
  }

  // Route x from `node` using (var, cut) there and existing rules below.
  static int route_with_override(const Tree& t, int node, int var, double cut,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const auto& nd = t.nodes[static_cast<std::size_t>(node)];
    int idx = x[var] <= cut ? nd.left : nd.right;
    while (!t.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
      const auto& cur = t.nodes[static_cast<std::size_t>(idx)];
      idx = x[cur.split_var] <= cur.split_value ? cur.left : cur.right;
    }
    return idx;
  }

  static int count_nog_after_grow(const Tree& t, int leaf) {
    // growing a leaf makes it a nog node; its former sibling-parent stays a
    // nog only if the other child is still a leaf
    int count = 1;
    for (int idx : t.nog_indices()) {
      const auto& nd = t.nodes[static_cast<std::size_t>(idx)];
      if (nd.left != leaf && nd.right != leaf) ++count;
    }
    return count;
  }

  static MoveProbs move_probs_after_grow() { return {0.35, 0.35, 0.30}; }

  void draw_leaves(Tree& t, const std::vector<int>& leaf_of,
                   const Eigen::VectorXd& r, Rng& rng) const {
    const auto leaves = t.leaf_indices();
    std::vector<double> count(t.nodes.size(), 0.0), sum(t.nodes.size(), 0.0);
    for (std::size_t i = 0; i < leaf_of.size(); ++i) {
      count[static_cast<std::size_t>(leaf_of[i])] += 1;
      sum[static_cast<std::size_t>(leaf_of[i])] += r[static_cast<Eigen::Index>(i)];
    }
    for (int idx : leaves) {
      const double c = count[static_cast<std::size_t>(idx)];
      const double s = sum[static_cast<std::size_t>(idx)];
      const double denom = sigma_mu2_ * c + 1.0;
      const double mean = sigma_mu2_ * s / denom;
      const double sd = std::sqrt(sigma_mu2_ / denom);
      t.nodes[static_cast<std::size_t>(idx)].mu = rng.normal(mean, sd);
    }
  }

  const Eigen::MatrixXd& c_;
  const SplitSupport& support_;
  const BartConfig& cfg_;
  double sigma_mu2_;
};

}  // namespace detail

// BART-probit Gibbs sampler for the treatment assignment: per sweep the
// latent utilities are refreshed, every tree takes one structural move
// (grow 0.35 / prune 0.35 / change 0.30) accepted by Metropolis-Hastings
// against the partial residual fit, and leaf values are redrawn from their
// conjugate normals. Retained sweeps map the fitted sums through the normal
// CDF, clamped to [1e-6, 1-1e-6].
inline PropensityDraws fit_bart_probit(const Dataset& d, const BartConfig& cfg,
                                       BartForest* final_forest = nullptr) {
  cfg.check();
  if (d.n() < 1) throw std::invalid_argument("fit_bart_probit: empty dataset");
  if (d.p() < 1) throw std::invalid_argument("fit_bart_probit: no confounders");

  const int n = d.n();
  const SplitSupport support = SplitSupport::from_data(d.confounders);
  const detail::TreeSampler sampler(d.confounders, support, cfg);
  Rng rng = Rng(cfg.seed).derive(0xBA27);

  std::vector<Tree> trees(static_cast<std::size_t>(cfg.num_trees),
                          Tree::single_leaf());
  std::vector<std::vector<int>> leaf_of(
      static_cast<std::size_t>(cfg.num_trees), std::vector<int>(n, 0));
  std::vector<Eigen::VectorXd> tree_fit(
      static_cast<std::size_t>(cfg.num_trees), Eigen::VectorXd::Zero(n));
  Eigen::VectorXd total_fit = Eigen::VectorXd::Zero(n);

  const int retained = (cfg.iterations + cfg.thin - 1) / cfg.thin;
  PropensityDraws out;
  out.model = "bart";
  out.pi.resize(retained, n);

  int kept = 0;
  const int total_sweeps = cfg.burn_in + cfg.iterations;
  for (int sweep = 0; sweep < total_sweeps; ++sweep) {
    const Eigen::VectorXd z = probit_latent_step(total_fit, d.treatment, rng);
    for (int r = 0; r < cfg.num_trees; ++r) {
      total_fit -= tree_fit[static_cast<std::size_t>(r)];
      const Eigen::VectorXd partial = z - total_fit;
      sampler.update(trees[static_cast<std::size_t>(r)],
                     leaf_of[static_cast<std::size_t>(r)], partial, rng);
      auto& fit_r = tree_fit[static_cast<std::size_t>(r)];
      const auto& tr = trees[static_cast<std::size_t>(r)];
      for (int i = 0; i < n; ++i)
        fit_r[i] = tr.nodes[static_cast<std::size_t>(
                                leaf_of[static_cast<std::size_t>(r)]
                                       [static_cast<std::size_t>(i)])]
                       .mu;
      total_fit += fit_r;
    }
    const int post = sweep - cfg.burn_in;
    if (post >= 0 && post % cfg.thin == 0 && kept < retained) {
      for (int i = 0; i < n; ++i)
        out.pi(kept, i) = std::clamp(normal_cdf(total_fit[i]), 1e-6, 1.0 - 1e-6);
      ++kept;
    }
  }
  out.pi.conservativeResize(kept, n);
  if (final_forest) final_forest->trees = trees;
  return out;
}

// Tree depths and split-variable usage, for variable-importance inspection.
inline nlohmann::ordered_json forest_summary_json(const BartForest& forest,
                                                  int num_vars) {
  nlohmann::ordered_json summary;
  std::vector<int> depth_counts;
  std::vector<int> var_usage(static_cast<std::size_t>(num_vars), 0);
  for (const auto& t : forest.trees) {
    const int depth = t.max_depth();
    if (depth >= static_cast<int>(depth_counts.size()))
      depth_counts.resize(static_cast<std::size_t>(depth) + 1, 0);
    ++depth_counts[static_cast<std::size_t>(depth)];
    for (int idx : t.internal_indices())
      ++var_usage[static_cast<std::size_t>(
          t.nodes[static_cast<std::size_t>(idx)].split_var)];
  }
  summary["num_trees"] = forest.trees.size();
  summary["depth_counts"] = depth_counts;
  summary["split_variable_usage"] = var_usage;
  return summary;
}

}  // namespace causalps
