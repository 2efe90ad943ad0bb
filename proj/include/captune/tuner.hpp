/*
   Copyright 2026 captune contributors.

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#ifndef CAPTUNE_TUNER_HPP
#define CAPTUNE_TUNER_HPP

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "captune/errors.hpp"

namespace captune::tuner {

/// The accessible default: cap at 80% of the socket's thermal design power.
inline int rule_of_thumb_cap(int tdp_w) {
  if (tdp_w <= 0) {
    throw PreconditionError("TDP must be positive, got " + std::to_string(tdp_w));
  }
  return static_cast<int>(std::lround(0.8 * tdp_w));
}

struct Evaluation {
  int cap_w = 0;
  double energy_j = 0.0;
  std::optional<double> runtime_s;
};

enum class TuneMethod { rule_of_thumb, golden_section, grid };

inline const char* tune_method_name(TuneMethod m) {
  switch (m) {
    case TuneMethod::rule_of_thumb:
      return "rule_of_thumb";
    case TuneMethod::golden_section:
      return "golden_section";
    case TuneMethod::grid:
      return "grid";
  }
  return "?";
}

struct TuneResult {
  int recommended_cap_w = 0;
  std::vector<Evaluation> evaluations;  // in evaluation order
  TuneMethod method = TuneMethod::golden_section;
  std::optional<double> perf_loss_vs_reference;
};

/// Thrown when a probe evaluation fails mid-search; carries what was
/// measured before the failure.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::vector<Evaluation> partial)
      : Error(what), partial_(std::move(partial)) {}

  const std::vector<Evaluation>& partial() const { return partial_; }

 private:
  std::vector<Evaluation> partial_;
};

/// Number of golden-section iterations (= evaluations beyond the first two)
/// needed to shrink [lo, hi] to tol.
inline int golden_section_budget(int lo_w, int hi_w, int tol_w) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  double span = static_cast<double>(hi_w - lo_w) / tol_w;
  return static_cast<int>(std::ceil(std::log(span) / std::log(phi))) + 2;
}

namespace detail {

/// Memoizing integer-watt evaluation wrapper: golden-section probes land on
/// fractional watts, but caps are whole watts end to end, so probes round
/// and repeats are free.
class Memo {
 public:
  explicit Memo(std::function<double(int)> evaluate) : evaluate_(std::move(evaluate)) {}

  double operator()(double x, std::vector<Evaluation>& log) {
    int cap = static_cast<int>(std::lround(x));
    auto it = cache_.find(cap);
    if (it != cache_.end()) {
      return it->second;
    }
    double energy;
    try {
      energy = evaluate_(cap);
    } catch (const std::exception& e) {
      throw EvaluationError("evaluation failed at " + std::to_string(cap) + " W: " + e.what(),
                            log);
    }
    cache_[cap] = energy;
    log.push_back({cap, energy, std::nullopt});
    return energy;
  }

 private:
  std::function<double(int)> evaluate_;
  std::map<int, double> cache_;
};

}  // namespace detail

/// Golden-section minimization of energy over integer caps in [lo_w, hi_w],
/// assuming unimodality. Shrinks the bracket until it is at most tol_w wide
/// and recommends its midpoint. Unique evaluations never exceed
/// ceil(log((hi-lo)/tol) / log(phi)) + 2.
inline TuneResult golden_section_cap(const std::function<double(int)>& evaluate, int lo_w,
                                     int hi_w, int tol_w) {
  if (lo_w >= hi_w) {
    throw PreconditionError("need lo < hi, got [" + std::to_string(lo_w) + ", " +
                            std::to_string(hi_w) + "]");
  }
  if (tol_w < 1) {
    throw PreconditionError("tolerance must be at least 1 W");
  }

  TuneResult result;
  result.method = TuneMethod::golden_section;

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  detail::Memo memo(evaluate);
  double a = lo_w;
  double b = hi_w;
  double x1 = b - (b - a) * invphi;
  double x2 = a + (b - a) * invphi;
  double f1 = memo(x1, result.evaluations);
  double f2 = memo(x2, result.evaluations);
  while (b - a > tol_w) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - (b - a) * invphi;
      f1 = memo(x1, result.evaluations);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + (b - a) * invphi;
      f2 = memo(x2, result.evaluations);
    }
  }
  result.recommended_cap_w = static_cast<int>(std::lround((a + b) / 2.0));
  return result;
}

/// Budget-aware tuning around a reference cap. Measures the reference,
/// golden-sections the energy curve, and if the energy-optimal cap costs
/// more runtime than (1 + budget) x reference, walks the recorded
/// evaluations upward in cap to the cheapest one inside the budget,
/// falling back to the reference cap when none qualify.
///
/// If the golden-section landing looks inconsistent with the probes it made
/// (an evaluated cap undercuts the recommendation's energy by more than
/// grid_fallback_margin), the unimodality assumption is considered broken
/// and the tuner falls back to an exhaustive 10 W lattice over [lo, hi].
inline TuneResult tune(const std::function<std::pair<double, double>(int)>& runner, int lo_w,
                       int hi_w, double perf_loss_budget, int reference_cap_w, int tol_w = 5,
                       double grid_fallback_margin = 0.02) {
  if (reference_cap_w < lo_w || reference_cap_w > hi_w) {
    throw PreconditionError("reference cap must lie in [lo, hi]");
  }
  if (perf_loss_budget < 0) {
    throw PreconditionError("performance loss budget must be nonnegative");
  }

  std::map<int, std::pair<double, double>> measured;
  std::vector<Evaluation> order;
  auto measure = [&](int cap) {
    auto it = measured.find(cap);
    if (it != measured.end()) {
      return it->second;
    }
    auto value = runner(cap);
    measured[cap] = value;
    order.push_back({cap, value.first, value.second});
    return value;
  };

  auto [ref_energy, ref_runtime] = measure(reference_cap_w);
  const double allowed_runtime = (1.0 + perf_loss_budget) * ref_runtime;

  TuneResult golden;
  try {
    golden = golden_section_cap([&](int cap) { return measure(cap).first; }, lo_w, hi_w, tol_w);
  } catch (const EvaluationError&) {
    throw EvaluationError("tune aborted mid-search", order);
  }

  int recommended = golden.recommended_cap_w;
  auto [rec_energy, rec_runtime] = measure(recommended);

  TuneResult result;
  result.method = TuneMethod::golden_section;

  double best_probe_energy = rec_energy;
  for (const auto& [cap, value] : measured) {
    best_probe_energy = std::min(best_probe_energy, value.first);
  }
  if (rec_energy > best_probe_energy * (1.0 + grid_fallback_margin)) {
    // Probes contradict unimodality; sweep the 10 W lattice instead.
    result.method = TuneMethod::grid;
    for (int cap = lo_w; cap <= hi_w; cap += 10) {
      measure(cap);
    }
    std::optional<Evaluation> pick;
    for (const auto& [cap, value] : measured) {
      if (!(value.second <= allowed_runtime)) {
        continue;
      }
      if (!pick || value.first < pick->energy_j ||
          (value.first == pick->energy_j && cap < pick->cap_w)) {
        pick = Evaluation{cap, value.first, value.second};
      }
    }
    recommended = pick ? pick->cap_w : reference_cap_w;
    rec_runtime = pick ? *pick->runtime_s : ref_runtime;
  } else if (!(rec_runtime <= allowed_runtime)) {
    // Higher caps run at least as fast; scan measured caps at or above the
    // recommendation for the cheapest-energy one in budget.
    std::optional<Evaluation> pick;
    for (const auto& [cap, value] : measured) {
      if (cap < recommended || !(value.second <= allowed_runtime)) {
        continue;
      }
      if (!pick || value.first < pick->energy_j ||
          (value.first == pick->energy_j && cap < pick->cap_w)) {
        pick = Evaluation{cap, value.first, value.second};
      }
    }
    if (pick) {
      recommended = pick->cap_w;
      rec_runtime = *pick->runtime_s;
    } else {
      recommended = reference_cap_w;
      rec_runtime = ref_runtime;
    }
  }

  result.recommended_cap_w = recommended;
  result.evaluations = std::move(order);
  result.perf_loss_vs_reference = rec_runtime / ref_runtime - 1.0;
  return result;
}

}  // namespace captune::tuner

#endif  // CAPTUNE_TUNER_HPP
