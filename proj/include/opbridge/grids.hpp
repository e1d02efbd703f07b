#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "opbridge/errors.hpp"

namespace opbridge {

// n+1 equispaced times 0 = t_0 < ... < t_n = end_frac * T.
inline std::vector<double> uniform_grid(double horizon, int n, double end_frac = 1.0) {
  if (!(horizon > 0.0)) throw InvalidInput("uniform_grid: horizon must be positive");
  if (n < 1) throw InvalidInput("uniform_grid: need at least one step");
  if (!(end_frac > 0.0) || end_frac > 1.0)
    throw InvalidInput("uniform_grid: end fraction must lie in (0, 1]");
  std::vector<double> t(n + 1);
  const double end = end_frac * horizon;
  for (int k = 0; k <= n; ++k) t[k] = end * static_cast<double>(k) / n;
  t[0] = 0.0;
  return t;
}

// Dyadic refinement toward the terminal time: T(1 - 2^{-k}) for k = 1..levels,
// prefixed with a coarse uniform warm-up on [0, T/2) so early behaviour is
// visible too. Strictly increasing, starts at 0, never reaches T.
inline std::vector<double> geometric_grid(double horizon, int levels) {
  if (!(horizon > 0.0)) throw InvalidInput("geometric_grid: horizon must be positive");
  if (levels < 1) throw InvalidInput("geometric_grid: need at least one level");
  std::vector<double> t;
  for (int j = 0; j < 8; ++j) t.push_back(horizon * j / 16.0);  // 0, T/16, ..., 7T/16
  for (int k = 1; k <= levels; ++k) t.push_back(horizon * (1.0 - std::ldexp(1.0, -k)));
  return t;
}

// Default grid for law comparisons: dyadic refinement to T(1 - 2^{-32})
// plus a handful of interior uniform points, sorted and deduplicated.
inline std::vector<double> comparison_grid(double horizon) {
  std::vector<double> t;
  for (int k = 1; k <= 32; ++k) t.push_back(horizon * (1.0 - std::ldexp(1.0, -k)));
  for (int j = 1; j <= 8; ++j) t.push_back(horizon * j / 9.0);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

// Parse a grid description: "uniform:N" or "uniform:N:endfrac" or "geometric:K".
inline std::vector<double> parse_grid_spec(const std::string& spec, double horizon) {
  const auto fail = [&]() -> std::vector<double> {
    throw InvalidInput("grid spec '" + spec +
                       "' not understood; expected uniform:N[:endfrac] or geometric:K");
  };
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return fail();
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  try {
    if (kind == "uniform") {
      const auto colon2 = rest.find(':');
      const int n = std::stoi(rest.substr(0, colon2));
      double end_frac = 1.0;
      if (colon2 != std::string::npos) end_frac = std::stod(rest.substr(colon2 + 1));
      return uniform_grid(horizon, n, end_frac);
    }
    if (kind == "geometric") return geometric_grid(horizon, std::stoi(rest));
  } catch (const InvalidInput&) {
    throw;
  } catch (const std::exception&) {
    return fail();
  }
  return fail();
}

// Validate a caller-supplied sampling grid: strictly increasing, starting at 0,
// contained in [0, T) unless allow_terminal.
inline void require_grid(const std::vector<double>& times, double horizon, const char* who,
                         bool allow_terminal = false) {
  if (times.empty()) throw InvalidInput(std::string(who) + ": time grid is empty");
  if (times.front() != 0.0)
    throw InvalidInput(std::string(who) + ": time grid must start at 0 (paths start at the origin)");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw InvalidInput(std::string(who) + ": time grid must be strictly increasing");
  const double lim = allow_terminal ? horizon : horizon * (1.0 - 1e-300);
  if (times.back() > lim || (!allow_terminal && times.back() >= horizon))
    throw InvalidInput(std::string(who) + ": time grid must stay below the terminal time");
}

}  // namespace opbridge
