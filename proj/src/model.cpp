#include "fdnet/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fdnet/rng.hpp"
#include "json.hpp"

namespace fdnet {

namespace {

using nlohmann::json;

void check_field(std::span<const double> u) {
  if (u.size() < 3) {
    throw InvalidInputError("field must have at least 3 points for size-3 filters");
  }
}

void check_params(const FDNetParams& p) {
  if (p.k < 1) throw InvalidInputError("params: k must be >= 1");
  for (double w : to_param_vector(p)) {
    if (!std::isfinite(w)) throw InvalidInputError("params: non-finite weight");
  }
}

bool all_finite(std::span<const double> u) {
  for (double v : u) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

json filter_to_json(const DerivativeFilter& f) {
  return {{"interior", f.interior},
          {"left_boundary", f.left_boundary},
          {"right_boundary", f.right_boundary}};
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) {
      throw ManifestError(std::string("params: unknown key '") + key + "' in " + where);
    }
  }
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ManifestError(std::string("params: missing key '") + key + "'");
  }
  return *it;
}

template <std::size_t N>
std::array<double, N> json_to_array(const json& j, const char* where) {
  if (!j.is_array() || j.size() != N) {
    throw ManifestError(std::string("params: '") + where + "' must be an array of " +
                        std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[i].is_number()) {
      throw ManifestError(std::string("params: non-numeric entry in ") + where);
    }
    out[i] = j[i].get<double>();
  }
  return out;
}

}  // namespace

std::vector<double> apply_filter(std::span<const double> u, const DerivativeFilter& f) {
  check_field(u);
  std::vector<double> out(u.size());
  apply_filter_span<double>(u, f, out);
  return out;
}

std::vector<double> auxiliary_step(std::span<const double> u, const FDNetParams& p) {
  check_field(u);
  check_params(p);
  std::vector<double> feat0(u.size());
  std::vector<double> feat1(u.size());
  std::vector<double> out(u.size());
  auxiliary_step_span<double>(u, p, feat0, feat1, out);
  return out;
}

std::vector<double> forward_step(std::span<const double> u, const FDNetParams& p) {
  check_field(u);
  check_params(p);
  std::vector<double> state(u.begin(), u.end());
  std::vector<double> feat0(u.size());
  std::vector<double> feat1(u.size());
  std::vector<double> next(u.size());
  for (int j = 0; j < p.k; ++j) {
    auxiliary_step_span<double>(state, p, feat0, feat1, next);
    state.swap(next);
  }
  return state;
}

PartialRollout rollout_partial(std::span<const double> u0, const FDNetParams& p,
                               std::int64_t n_steps) {
  check_field(u0);
  check_params(p);
  if (n_steps < 1) throw InvalidInputError("rollout: n_steps must be >= 1");

  const auto m = static_cast<std::int64_t>(u0.size());
  PartialRollout result;
  result.series = FieldSeries(n_steps + 1, m);
  std::copy(u0.begin(), u0.end(), result.series.snapshot(0).begin());

  std::vector<double> state(u0.begin(), u0.end());
  std::vector<double> next(u0.size());
  std::vector<double> feat0(u0.size());
  std::vector<double> feat1(u0.size());
  for (std::int64_t j = 0; j < n_steps; ++j) {
    for (int sub = 0; sub < p.k; ++sub) {
      auxiliary_step_span<double>(state, p, feat0, feat1, next);
      state.swap(next);
    }
    if (!all_finite(state)) {
      result.diverged_at = j + 1;
      result.series.values.resize(static_cast<std::size_t>((j + 1) * m));
      return result;
    }
    std::copy(state.begin(), state.end(), result.series.snapshot(j + 1).begin());
  }
  return result;
}

FieldSeries rollout(std::span<const double> u0, const FDNetParams& p,
                    std::int64_t n_steps) {
  PartialRollout partial = rollout_partial(u0, p, n_steps);
  if (partial.diverged_at) {
    throw DivergenceError("rollout: non-finite state at step " +
                              std::to_string(*partial.diverged_at),
                          *partial.diverged_at);
  }
  return std::move(partial.series);
}

FDNetParams init_params(std::uint64_t seed, int k, double scale) {
  if (k < 1) throw ConfigError("init_params: k must be >= 1");
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw ConfigError("init_params: scale must be finite and >= 0");
  }
  Rng rng(seed);
  ParamVector v{};
  for (auto& w : v) w = scale * rng.normal();
  FDNetParams p = params_from_vector(v, k);
  // Boundary stencils start at zero. Their first weights multiply boundary
  // values that are identically zero in the data, so they receive no gradient
  // and would otherwise stay at random values, leaving the boundary
  // self-coupling of the step matrix away from 1 and long rollouts unstable.
  for (auto& f : p.filters) {
    f.left_boundary = {0.0, 0.0};
    f.right_boundary = {0.0, 0.0};
  }
  return p;
}

FDNetParams euler_params(double alpha, int k) {
  if (k < 1) throw ConfigError("euler_params: k must be >= 1");
  FDNetParams p;
  p.k = k;
  p.filters[1].interior = {1.0, -2.0, 1.0};
  p.agg = {0.0, alpha / static_cast<double>(k)};
  return p;
}

ParamVector to_param_vector(const FDNetParams& p) { return flatten_params(p); }

FDNetParams params_from_vector(const ParamVector& v, int k) {
  return unflatten_params(v, k);
}

std::string params_to_json(const FDNetParams& p, const std::optional<Grid1D>& grid) {
  json doc = {
      {"format_version", "1"},
      {"k", p.k},
      {"filters", {filter_to_json(p.filters[0]), filter_to_json(p.filters[1])}},
      {"agg", p.agg},
  };
  if (grid) {
    doc["grid"] = {{"num_points", grid->num_points}, {"length", grid->length}};
  }
  return doc.dump(2) + "\n";
}

FDNetParams params_from_json(const std::string& text, std::optional<Grid1D>* grid_out) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ManifestError(std::string("params: malformed JSON: ") + e.what());
  }
  reject_unknown_keys(doc, {"format_version", "k", "filters", "agg", "grid"}, "root");
  if (!doc.contains("format_version") || doc["format_version"].get<std::string>() != "1") {
    throw ManifestError("params: missing or unsupported format_version");
  }
  if (!doc.contains("k") || !doc["k"].is_number_integer() || doc["k"].get<int>() < 1) {
    throw ManifestError("params: k must be an integer >= 1");
  }
  if (!doc.contains("filters") || !doc["filters"].is_array() ||
      doc["filters"].size() != kNumChannels) {
    throw ManifestError("params: expected exactly 2 filters");
  }
  if (!doc.contains("agg")) throw ManifestError("params: missing agg");

  FDNetParams p;
  p.k = doc["k"].get<int>();
  for (int c = 0; c < kNumChannels; ++c) {
    const json& fj = doc["filters"][static_cast<std::size_t>(c)];
    reject_unknown_keys(fj, {"interior", "left_boundary", "right_boundary"}, "filter");
    auto& f = p.filters[static_cast<std::size_t>(c)];
    f.interior = json_to_array<3>(require(fj, "interior"), "interior");
    f.left_boundary = json_to_array<2>(require(fj, "left_boundary"), "left_boundary");
    f.right_boundary = json_to_array<2>(require(fj, "right_boundary"), "right_boundary");
  }
  p.agg = json_to_array<2>(doc["agg"], "agg");
  for (double w : to_param_vector(p)) {
    if (!std::isfinite(w)) throw ManifestError("params: non-finite weight");
  }

  if (grid_out) {
    grid_out->reset();
    if (doc.contains("grid")) {
      const json& gj = doc["grid"];
      reject_unknown_keys(gj, {"num_points", "length"}, "grid");
      Grid1D g;
      g.num_points = require(gj, "num_points").get<std::int64_t>();
      g.length = require(gj, "length").get<double>();
      *grid_out = g;
    }
  }
  return p;
}

void save_params(const FDNetParams& p, const std::filesystem::path& path,
                 const std::optional<Grid1D>& grid) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_params: cannot open '" + path.string() + "' for writing");
  out << params_to_json(p, grid);
  out.flush();
  if (!out) throw IoError("save_params: write failed for '" + path.string() + "'");
}

FDNetParams load_params(const std::filesystem::path& path, std::optional<Grid1D>* grid_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_params: cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return params_from_json(buffer.str(), grid_out);
}

}  // namespace fdnet
