#include "fdnet/heat_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "fdnet/rng.hpp"
#include "json.hpp"

namespace fdnet {

namespace {

using nlohmann::json;

void write_le_doubles(std::ostream& out, const std::vector<double>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char buf[8];
      for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(buf, 8);
    }
  }
}

std::vector<double> read_le_doubles(const std::string& bytes, std::size_t offset,
                                    std::size_t count) {
  std::vector<double> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), bytes.data() + offset, count * sizeof(double));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) {
        bits = (bits << 8) |
               static_cast<unsigned char>(bytes[offset + i * 8 + static_cast<std::size_t>(b)]);
      }
      values[i] = std::bit_cast<double>(bits);
    }
  }
  return values;
}

const json& require_key(const json& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ManifestError(std::string("dataset manifest: missing key '") + key +
                        "' in " + where);
  }
  return *it;
}

}  // namespace

void PhysicsConfig::validate() const {
  grid.validate();
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ConfigError("physics: beta must be positive and finite");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ConfigError("physics: dt must be positive and finite");
  }
  if (num_steps < 1) throw ConfigError("physics: num_steps must be >= 1");
}

std::span<const double> Dataset::snapshot(std::int64_t sample, std::int64_t time) const {
  const std::int64_t m = num_points();
  const std::int64_t offset = (sample * num_snapshots() + time) * m;
  return {values.data() + offset, static_cast<std::size_t>(m)};
}

double Dataset::max_abs() const {
  double best = 0.0;
  for (double v : values) best = std::max(best, std::abs(v));
  return best;
}

namespace {

/// sin(m pi x_i / L) for every (mode, point); shared across samples and
/// snapshot times when generating whole datasets.
std::vector<double> sine_table(const Grid1D& grid, int modes) {
  std::vector<double> table(static_cast<std::size_t>(modes) *
                            static_cast<std::size_t>(grid.num_points));
  for (int m = 1; m <= modes; ++m) {
    for (std::int64_t i = 0; i < grid.num_points; ++i) {
      table[static_cast<std::size_t>(m - 1) * grid.num_points +
            static_cast<std::size_t>(i)] =
          std::sin(m * std::numbers::pi * grid.x(i) / grid.length);
    }
  }
  return table;
}

void analytic_solution_into(const SampleSpec& spec, const PhysicsConfig& physics,
                            double t, const std::vector<double>& sines,
                            std::span<double> out) {
  const std::int64_t m_points = physics.grid.num_points;
  const int modes = spec.num_modes();
  const double length = physics.grid.length;

  // Per-mode decay factors are shared by all grid points.
  std::vector<double> decay(static_cast<std::size_t>(modes));
  for (int m = 1; m <= modes; ++m) {
    const double rate = m * std::numbers::pi / length;
    decay[static_cast<std::size_t>(m - 1)] =
        spec.coeffs[static_cast<std::size_t>(m - 1)] *
        std::exp(-physics.beta * rate * rate * t);
  }

  for (std::int64_t i = 1; i + 1 < m_points; ++i) {
    double acc = 0.0;
    for (int m = 1; m <= modes; ++m) {
      acc += decay[static_cast<std::size_t>(m - 1)] *
             sines[static_cast<std::size_t>(m - 1) * m_points + static_cast<std::size_t>(i)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  // Dirichlet ends are exact zeros, not sin(m*pi) round-off.
  out[0] = 0.0;
  out[static_cast<std::size_t>(m_points - 1)] = 0.0;
}

void check_solution_inputs(const SampleSpec& spec, const PhysicsConfig& physics,
                           double t) {
  physics.validate();
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw InvalidInputError("analytic_solution: t must be finite and >= 0");
  }
  if (spec.coeffs.empty()) {
    throw InvalidInputError("analytic_solution: spec has no mode coefficients");
  }
  for (double c : spec.coeffs) {
    if (!std::isfinite(c)) {
      throw InvalidInputError("analytic_solution: non-finite mode coefficient");
    }
  }
}

}  // namespace

std::vector<double> analytic_solution(const SampleSpec& spec,
                                      const PhysicsConfig& physics, double t) {
  check_solution_inputs(spec, physics, t);
  const auto sines = sine_table(physics.grid, spec.num_modes());
  std::vector<double> u(static_cast<std::size_t>(physics.grid.num_points), 0.0);
  analytic_solution_into(spec, physics, t, sines, u);
  return u;
}

Dataset generate_dataset(std::int64_t num_samples, const PhysicsConfig& physics,
                         int num_modes, std::uint64_t coeff_seed,
                         double split_ratio, std::uint64_t split_seed) {
  physics.validate();
  if (num_samples < 2) throw ConfigError("generate_dataset: num_samples must be >= 2");
  if (num_modes < 1) throw ConfigError("generate_dataset: num_modes must be >= 1");
  if (!(split_ratio > 0.0) || !(split_ratio < 1.0)) {
    throw ConfigError("generate_dataset: split_ratio must lie in (0, 1)");
  }

  Dataset ds;
  ds.physics = physics;
  ds.provenance = {num_modes, coeff_seed, split_ratio, split_seed};

  ds.specs.reserve(static_cast<std::size_t>(num_samples));
  for (std::int64_t s = 0; s < num_samples; ++s) {
    SampleSpec spec;
    spec.seed = coeff_seed + static_cast<std::uint64_t>(s);
    Rng rng(spec.seed);
    spec.coeffs.resize(static_cast<std::size_t>(num_modes));
    for (auto& c : spec.coeffs) c = rng.normal();
    ds.specs.push_back(std::move(spec));
  }

  const std::int64_t snapshots = physics.num_steps + 1;
  const std::int64_t m_points = physics.grid.num_points;
  const auto sines = sine_table(physics.grid, num_modes);
  ds.values.resize(static_cast<std::size_t>(num_samples * snapshots * m_points));
  for (std::int64_t s = 0; s < num_samples; ++s) {
    check_solution_inputs(ds.specs[static_cast<std::size_t>(s)], physics, 0.0);
    for (std::int64_t j = 0; j < snapshots; ++j) {
      const double t = static_cast<double>(j) * physics.dt;
      std::span<double> out{ds.values.data() + (s * snapshots + j) * m_points,
                            static_cast<std::size_t>(m_points)};
      analytic_solution_into(ds.specs[static_cast<std::size_t>(s)], physics, t, sines, out);
    }
  }

  std::vector<std::int64_t> order(static_cast<std::size_t>(num_samples));
  for (std::int64_t s = 0; s < num_samples; ++s) order[static_cast<std::size_t>(s)] = s;
  Rng split_rng(split_seed);
  split_rng.shuffle(order);
  const auto num_train = static_cast<std::int64_t>(
      std::floor(static_cast<double>(num_samples) * split_ratio));
  if (num_train == 0 || num_train == num_samples) {
    throw ConfigError("generate_dataset: split produces an empty partition");
  }
  ds.train_indices.assign(order.begin(), order.begin() + num_train);
  ds.test_indices.assign(order.begin() + num_train, order.end());
  std::sort(ds.train_indices.begin(), ds.train_indices.end());
  std::sort(ds.test_indices.begin(), ds.test_indices.end());
  return ds;
}

std::string dataset_manifest_json(const Dataset& ds) {
  json specs = json::array();
  for (const auto& spec : ds.specs) {
    specs.push_back({{"seed", spec.seed}, {"coeffs", spec.coeffs}});
  }
  const json manifest = {
      {"format", "fdds"},
      {"format_version", "1"},
      {"grid", {{"num_points", ds.physics.grid.num_points},
                {"length", ds.physics.grid.length}}},
      {"physics", {{"beta", ds.physics.beta},
                   {"dt", ds.physics.dt},
                   {"num_steps", ds.physics.num_steps}}},
      {"provenance", {{"num_modes", ds.provenance.num_modes},
                      {"coeff_seed", ds.provenance.coeff_seed},
                      {"split_ratio", ds.provenance.split_ratio},
                      {"split_seed", ds.provenance.split_seed}}},
      {"specs", specs},
      {"split", {{"train", ds.train_indices}, {"test", ds.test_indices}}},
      {"payload", {{"dtype", "float64-le"},
                   {"layout", "sample_time_space"},
                   {"num_values", ds.values.size()}}},
  };
  return manifest.dump();
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_dataset: cannot open '" + path.string() + "' for writing");
  out << dataset_manifest_json(ds) << '\n';
  write_le_doubles(out, ds.values);
  out.flush();
  if (!out) throw IoError("save_dataset: write failed for '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  const std::size_t newline = bytes.find('\n');
  if (newline == std::string::npos) {
    throw ManifestError("load_dataset: missing manifest terminator");
  }

  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw ManifestError(std::string("load_dataset: malformed manifest: ") + e.what());
  }

  if (require_key(manifest, "format", "root").get<std::string>() != "fdds" ||
      require_key(manifest, "format_version", "root").get<std::string>() != "1") {
    throw ManifestError("load_dataset: unsupported format or version");
  }

  Dataset ds;
  const json& grid = require_key(manifest, "grid", "root");
  ds.physics.grid.num_points = require_key(grid, "num_points", "grid").get<std::int64_t>();
  ds.physics.grid.length = require_key(grid, "length", "grid").get<double>();
  const json& physics = require_key(manifest, "physics", "root");
  ds.physics.beta = require_key(physics, "beta", "physics").get<double>();
  ds.physics.dt = require_key(physics, "dt", "physics").get<double>();
  ds.physics.num_steps = require_key(physics, "num_steps", "physics").get<std::int64_t>();
  const json& provenance = require_key(manifest, "provenance", "root");
  ds.provenance.num_modes = require_key(provenance, "num_modes", "provenance").get<int>();
  ds.provenance.coeff_seed =
      require_key(provenance, "coeff_seed", "provenance").get<std::uint64_t>();
  ds.provenance.split_ratio =
      require_key(provenance, "split_ratio", "provenance").get<double>();
  ds.provenance.split_seed =
      require_key(provenance, "split_seed", "provenance").get<std::uint64_t>();

  for (const json& spec_json : require_key(manifest, "specs", "root")) {
    SampleSpec spec;
    spec.seed = require_key(spec_json, "seed", "spec").get<std::uint64_t>();
    spec.coeffs = require_key(spec_json, "coeffs", "spec").get<std::vector<double>>();
    ds.specs.push_back(std::move(spec));
  }
  const json& split = require_key(manifest, "split", "root");
  ds.train_indices = require_key(split, "train", "split").get<std::vector<std::int64_t>>();
  ds.test_indices = require_key(split, "test", "split").get<std::vector<std::int64_t>>();

  // Cross-checks between manifest sections.
  const auto num_samples = static_cast<std::int64_t>(ds.specs.size());
  if (num_samples == 0) throw ManifestError("load_dataset: manifest lists no samples");
  std::vector<char> seen(static_cast<std::size_t>(num_samples), 0);
  for (const auto& idx_list : {ds.train_indices, ds.test_indices}) {
    for (std::int64_t idx : idx_list) {
      if (idx < 0 || idx >= num_samples || seen[static_cast<std::size_t>(idx)]) {
        throw ManifestError("load_dataset: split is not a partition of the samples");
      }
      seen[static_cast<std::size_t>(idx)] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ManifestError("load_dataset: split does not cover all samples");
  }

  const json& payload = require_key(manifest, "payload", "root");
  const auto declared = require_key(payload, "num_values", "payload").get<std::uint64_t>();
  const auto expected = static_cast<std::uint64_t>(num_samples) *
                        static_cast<std::uint64_t>(ds.num_snapshots()) *
                        static_cast<std::uint64_t>(ds.num_points());
  if (declared != expected) {
    throw ShapeMismatchError(
        "load_dataset: shape mismatch between manifest dimensions and payload declaration");
  }

  const std::size_t blob_bytes = bytes.size() - newline - 1;
  if (blob_bytes < expected * sizeof(double)) {
    throw TruncatedPayloadError("load_dataset: truncated payload");
  }
  if (blob_bytes > expected * sizeof(double)) {
    throw ShapeMismatchError(
        "load_dataset: shape mismatch: payload larger than manifest declares");
  }
  ds.values = read_le_doubles(bytes, newline + 1, static_cast<std::size_t>(expected));
  return ds;
}

}  // namespace fdnet
