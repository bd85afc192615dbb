#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmplab/errors.hpp"
#include "cmplab/models.hpp"
#include "cmplab/rng.hpp"
#include "cmplab/tensor.hpp"

namespace cmplab {

struct MaskSite {
  std::string id;
  int width = 0;
};

inline std::vector<MaskSite> mask_sites_for(const ModelConfig& c) {
  std::vector<MaskSite> sites;
  for (const auto& s : c.dropout_sites()) sites.push_back({s, c.site_width(s)});
  return sites;
}

// Nested per-site survivor sets. Each step resamples survivors of the
// previous step at keep rate (1-p), so zero positions only grow and a
// survivor after n steps carries the exact scale (1-p)^(-n).
class MaskChain {
 public:
  MaskChain(std::vector<MaskSite> sites, double p) : p_(p), sites_(std::move(sites)) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("drop rate must be in (0,1)");
    std::vector<std::vector<std::uint8_t>> all;
    for (const auto& s : sites_) all.emplace_back(static_cast<size_t>(s.width), 1);
    alive_.push_back(std::move(all));  // step 0: everything alive
  }

  double drop_rate() const { return p_; }
  int steps() const { return static_cast<int>(alive_.size()) - 1; }
  const std::vector<MaskSite>& sites() const { return sites_; }

  const std::vector<std::uint8_t>& alive(int step, int site) const {
    if (step < 0 || step > steps()) throw IndexError("mask chain step out of range");
    return alive_[static_cast<size_t>(step)][static_cast<size_t>(site)];
  }

  // (1-p)^n for the n recorded steps.
  double effective_keep_prob() const { return std::pow(1.0 - p_, steps()); }

  // Per-site mask vectors for chain position i; step 0 is all ones,
  // survivors at step i carry exactly (1-p)^(-i).
  SiteMasks masks_for_step(int i) const {
    if (i < 0 || i > steps()) throw IndexError("mask step " + std::to_string(i) + " out of range");
    double scale = std::pow(1.0 - p_, -static_cast<double>(i));
    SiteMasks m;
    for (size_t s = 0; s < sites_.size(); ++s) {
      Tensor t({sites_[s].width});
      const auto& a = alive_[static_cast<size_t>(i)][s];
      for (int u = 0; u < sites_[s].width; ++u) t[u] = a[static_cast<size_t>(u)] ? scale : 0.0;
      m[sites_[s].id] = std::move(t);
    }
    return m;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json steps_j = nlohmann::ordered_json::array();
    for (int n = 1; n <= steps(); ++n) {
      nlohmann::ordered_json sites_j;
      for (size_t s = 0; s < sites_.size(); ++s) {
        std::vector<int> survivors;
        const auto& a = alive_[static_cast<size_t>(n)][s];
        for (size_t u = 0; u < a.size(); ++u)
          if (a[u]) survivors.push_back(static_cast<int>(u));
        sites_j[sites_[s].id] = survivors;
      }
      steps_j.push_back(std::move(sites_j));
    }
    return steps_j;
  }

  friend MaskChain drop_step(const MaskChain& chain, RngStream& rng);

 private:
  double p_;
  std::vector<MaskSite> sites_;
  std::vector<std::vector<std::vector<std::uint8_t>>> alive_;  // [step][site][unit]
};

// Each surviving unit independently survives again with probability 1-p.
// An empty survivor set is legal; the forward pass still runs.
inline MaskChain drop_step(const MaskChain& chain, RngStream& rng) {
  MaskChain next = chain;
  auto latest = next.alive_.back();
  for (auto& site : latest)
    for (auto& unit : site)
      if (unit) unit = rng.bernoulli(1.0 - chain.p_) ? 1 : 0;
  next.alive_.push_back(std::move(latest));
  return next;
}

// Nested retained-segment index sets over one input. Support segments are
// never removed and every step strictly shrinks the retained set.
class CropChain {
 public:
  explicit CropChain(std::vector<bool> support) : support_(std::move(support)) {
    std::vector<int> all(support_.size());
    for (size_t i = 0; i < support_.size(); ++i) all[i] = static_cast<int>(i);
    steps_.push_back(std::move(all));
  }

  int steps() const { return static_cast<int>(steps_.size()) - 1; }
  const std::vector<bool>& support() const { return support_; }

  const std::vector<int>& retained(int step) const {
    if (step < 0 || step > steps()) throw IndexError("crop chain step out of range");
    return steps_[static_cast<size_t>(step)];
  }

  int removable_count(int step) const {
    int n = 0;
    for (int idx : retained(step))
      if (!support_[static_cast<size_t>(idx)]) ++n;
    return n;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (size_t s = 1; s < steps_.size(); ++s) j.push_back(steps_[s]);
    return j;
  }

  friend CropChain crop_step(const CropChain& chain, RngStream& rng);

 private:
  std::vector<bool> support_;
  std::vector<std::vector<int>> steps_;  // retained indices per step, ordered
};

// Removes a uniformly sized, uniformly chosen nonempty subset of the
// currently retained non-support segments.
inline CropChain crop_step(const CropChain& chain, RngStream& rng) {
  const auto& current = chain.retained(chain.steps());
  std::vector<int> removable;
  for (int idx : current)
    if (!chain.support_[static_cast<size_t>(idx)]) removable.push_back(idx);
  if (removable.empty()) throw NoCroppableSegments();

  int k = 1 + rng.next_int(static_cast<int>(removable.size()));
  // partial Fisher-Yates: first k entries are the removal set
  for (int i = 0; i < k; ++i) {
    int j = i + rng.next_int(static_cast<int>(removable.size()) - i);
    std::swap(removable[static_cast<size_t>(i)], removable[static_cast<size_t>(j)]);
  }
  removable.resize(static_cast<size_t>(k));
  std::vector<bool> drop(chain.support_.size(), false);
  for (int idx : removable) drop[static_cast<size_t>(idx)] = true;

  std::vector<int> next;
  for (int idx : current)
    if (!drop[static_cast<size_t>(idx)]) next.push_back(idx);

  CropChain out = chain;
  out.steps_.push_back(std::move(next));
  return out;
}

}  // namespace cmplab
