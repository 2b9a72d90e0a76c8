#include "dagsynth/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dagsynth/errors.hpp"

namespace dagsynth {
namespace {

constexpr double kClampSigmas = 4.0;
constexpr double kMinModeWeight = 1e-3;
constexpr std::size_t kMaxEmSamples = 50000;
constexpr int kMaxEmIterations = 500;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<std::string> resolve_names(const EncoderSet& encoders,
                                       std::span<const std::string> names) {
  if (!names.empty()) {
    return {names.begin(), names.end()};
  }
  return encoders.names();
}

}  // namespace

std::size_t ContinuousEncoder::assign_mode(double value) const {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double z = (value - means[k]) / stds[k];
    const double score = std::log(weights[k]) - std::log(stds[k]) - 0.5 * z * z;
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

double ContinuousEncoder::normalize(double value, std::size_t mode) const {
  const double u = (value - means[mode]) / (kClampSigmas * stds[mode]);
  return std::clamp(u, -1.0, 1.0);
}

double ContinuousEncoder::denormalize(double u, std::size_t mode) const {
  return u * kClampSigmas * stds[mode] + means[mode];
}

std::size_t encoded_width(const VariableEncoder& encoder) {
  return std::visit([](const auto& e) { return e.width(); }, encoder);
}

void EncoderSet::add(std::string name, VariableEncoder encoder) {
  if (contains(name)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate encoder for '" + name + "'");
  }
  entries_.emplace_back(std::move(name), std::move(encoder));
}

bool EncoderSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

const VariableEncoder& EncoderSet::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) {
      return e.second;
    }
  }
  throw Error(ErrorCode::kUnknownVariable, "no encoder for '" + std::string(name) + "'");
}

std::size_t EncoderSet::width(std::string_view name) const { return encoded_width(at(name)); }

std::size_t EncoderSet::total_width(std::span<const std::string> names) const {
  std::size_t total = 0;
  for (const auto& n : names) {
    total += width(n);
  }
  return total;
}

std::vector<std::string> EncoderSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.push_back(e.first);
  }
  return out;
}

nlohmann::json to_json(const EncoderSet& encoders) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [name, enc] : encoders.entries()) {
    nlohmann::json j;
    j["name"] = name;
    if (const auto* c = std::get_if<ContinuousEncoder>(&enc)) {
      j["type"] = "continuous";
      j["means"] = c->means;
      j["stds"] = c->stds;
      j["weights"] = c->weights;
    } else {
      const auto& cat = std::get<CategoricalEncoder>(enc);
      j["type"] = "categorical";
      j["categories"] = cat.categories;
      j["smoothing"] = cat.smoothing;
    }
    out.push_back(std::move(j));
  }
  return out;
}

EncoderSet encoders_from_json(const nlohmann::json& j) {
  EncoderSet set;
  for (const auto& e : j) {
    const auto type = e.at("type").get<std::string>();
    if (type == "continuous") {
      ContinuousEncoder c;
      c.means = e.at("means").get<std::vector<double>>();
      c.stds = e.at("stds").get<std::vector<double>>();
      c.weights = e.at("weights").get<std::vector<double>>();
      if (c.means.empty() || c.means.size() != c.stds.size() ||
          c.means.size() != c.weights.size()) {
        throw Error(ErrorCode::kInvalidArgument, "malformed continuous encoder");
      }
      set.add(e.at("name").get<std::string>(), std::move(c));
    } else if (type == "categorical") {
      CategoricalEncoder c;
      c.categories = e.at("categories").get<std::vector<std::string>>();
      c.smoothing = e.at("smoothing").get<double>();
      set.add(e.at("name").get<std::string>(), std::move(c));
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown encoder type '" + type + "'");
    }
  }
  return set;
}

ContinuousEncoder fit_continuous(std::span<const double> values, std::size_t n_modes,
                                 std::uint64_t seed,
                                 std::optional<std::pair<double, double>> bounds,
                                 bool* degenerate) {
  if (values.empty()) {
    throw Error(ErrorCode::kEmptyTable, "cannot fit an encoder on an empty column");
  }
  if (n_modes == 0) {
    throw Error(ErrorCode::kInvalidArgument, "n_modes must be positive");
  }
  if (degenerate) {
    *degenerate = false;
  }

  std::vector<double> x(values.begin(), values.end());
  if (x.size() > kMaxEmSamples) {
    std::mt19937_64 rng(seed);
    std::shuffle(x.begin(), x.end(), rng);
    x.resize(kMaxEmSamples);
  }
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());

  const double lo = sorted.front();
  const double hi = sorted.back();
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(lo))) {
    if (degenerate) {
      *degenerate = true;
    }
    const double sigma =
        bounds ? std::max(1e-6, 1e-3 * (bounds->second - bounds->first)) : 1e-6;
    return ContinuousEncoder{{lo}, {sigma}, {1.0}};
  }

  const auto n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) {
    var += (v - mean) * (v - mean);
  }
  const double overall_std = std::sqrt(var / n);
  const double sigma_floor = std::max(1e-6, 1e-3 * overall_std);

  const std::size_t k_modes = n_modes;
  std::vector<double> mu(k_modes), sigma(k_modes, overall_std), w(k_modes, 1.0 / k_modes);
  for (std::size_t k = 0; k < k_modes; ++k) {
    mu[k] = quantile_sorted(sorted, (static_cast<double>(k) + 0.5) / static_cast<double>(k_modes));
  }

  std::vector<double> resp(x.size() * k_modes);
  std::vector<double> log_p(k_modes);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxEmIterations; ++iter) {
    // E step
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double max_lp = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < k_modes; ++k) {
        if (w[k] <= 0.0) {
          log_p[k] = -std::numeric_limits<double>::infinity();
          continue;
        }
        const double z = (x[i] - mu[k]) / sigma[k];
        log_p[k] = std::log(w[k]) - std::log(sigma[k]) - 0.5 * z * z;
        max_lp = std::max(max_lp, log_p[k]);
      }
      double total = 0.0;
      for (std::size_t k = 0; k < k_modes; ++k) {
        const double p = std::exp(log_p[k] - max_lp);
        resp[i * k_modes + k] = p;
        total += p;
      }
      for (std::size_t k = 0; k < k_modes; ++k) {
        resp[i * k_modes + k] /= total;
      }
      ll += max_lp + std::log(total);
    }
    // M step
    for (std::size_t k = 0; k < k_modes; ++k) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        nk += resp[i * k_modes + k];
        sx += resp[i * k_modes + k] * x[i];
      }
      if (nk < 1e-10) {
        w[k] = 0.0;
        continue;
      }
      mu[k] = sx / nk;
      double sxx = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - mu[k];
        sxx += resp[i * k_modes + k] * d * d;
      }
      sigma[k] = std::max(std::sqrt(sxx / nk), sigma_floor);
      w[k] = nk / n;
    }
    if (std::abs(ll - prev_ll) <= 1e-10 * (std::abs(ll) + 1.0)) {
      break;
    }
    prev_ll = ll;
  }

  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < k_modes; ++k) {
    if (w[k] >= kMinModeWeight) {
      keep.push_back(k);
    }
  }
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return mu[a] < mu[b]; });
  ContinuousEncoder enc;
  double total_w = 0.0;
  for (std::size_t k : keep) {
    total_w += w[k];
  }
  for (std::size_t k : keep) {
    enc.means.push_back(mu[k]);
    enc.stds.push_back(sigma[k]);
    enc.weights.push_back(w[k] / total_w);
  }
  return enc;
}

EncoderSet fit_encoders(const DataTable& table, const EncoderOptions& options,
                        std::vector<std::string>* warnings) {
  if (table.n_rows() == 0) {
    throw Error(ErrorCode::kEmptyTable, "cannot fit encoders on an empty table");
  }
  if (options.smoothing < 0.0 || options.smoothing >= 0.5) {
    throw Error(ErrorCode::kInvalidArgument, "smoothing must lie in [0, 0.5)");
  }
  EncoderSet set;
  const auto& schema = table.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& v = schema[c];
    if (v.is_categorical()) {
      set.add(v.name, CategoricalEncoder{v.categories, options.smoothing});
      continue;
    }
    bool degenerate = false;
    // Per-column seed so the fit of one column does not depend on column order.
    auto enc = fit_continuous(table.continuous(c), options.n_modes,
                              options.seed + 0x9E3779B97F4A7C15ULL * (c + 1), v.bounds,
                              &degenerate);
    if (degenerate && warnings) {
      warnings->push_back("DegenerateColumn: '" + v.name +
                          "' is constant; fitted with a single mode");
    }
    set.add(v.name, std::move(enc));
  }
  return set;
}

Eigen::MatrixXd encode_rows(const DataTable& table, const EncoderSet& encoders,
                            std::span<const std::string> names_in,
                            std::span<const std::size_t> rows,
                            std::mt19937_64* smoothing_rng) {
  const auto names = resolve_names(encoders, names_in);
  const auto width = static_cast<Eigen::Index>(encoders.total_width(names));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), width);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::Index offset = 0;
  for (const auto& name : names) {
    const auto col = table.schema().index_of(name);
    if (!col) {
      throw Error(ErrorCode::kMissingColumn, name);
    }
    const auto& spec = table.schema()[*col];
    const auto& enc = encoders.at(name);
    if (const auto* cat = std::get_if<CategoricalEncoder>(&enc)) {
      if (!spec.is_categorical()) {
        throw Error(ErrorCode::kSchemaMismatch, "'" + name + "' is not categorical in the table");
      }
      // Table codes index the table's category list; map them by label.
      std::vector<std::int32_t> remap(spec.categories.size(), -1);
      for (std::size_t i = 0; i < spec.categories.size(); ++i) {
        const auto it = std::find(cat->categories.begin(), cat->categories.end(),
                                  spec.categories[i]);
        if (it != cat->categories.end()) {
          remap[i] = static_cast<std::int32_t>(it - cat->categories.begin());
        }
      }
      const auto& codes = table.codes(*col);
      const auto k = static_cast<Eigen::Index>(cat->width());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto code = remap[static_cast<std::size_t>(codes[rows[i]])];
        if (code < 0) {
          throw Error(ErrorCode::kUnknownCategory,
                      "value '" + spec.categories[static_cast<std::size_t>(codes[rows[i]])] +
                          "' at row " + std::to_string(rows[i]) + ", column '" + name + "'");
        }
        const auto r = static_cast<Eigen::Index>(i);
        out(r, offset + code) = 1.0;
        if (smoothing_rng && cat->smoothing > 0.0) {
          double total = 0.0;
          for (Eigen::Index j = 0; j < k; ++j) {
            out(r, offset + j) += cat->smoothing * unit(*smoothing_rng);
            total += out(r, offset + j);
          }
          out.block(r, offset, 1, k) /= total;
        }
      }
      offset += k;
    } else {
      const auto& cont = std::get<ContinuousEncoder>(enc);
      if (spec.is_categorical()) {
        throw Error(ErrorCode::kSchemaMismatch, "'" + name + "' is not continuous in the table");
      }
      const auto& values = table.continuous(*col);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double v = values[rows[i]];
        const std::size_t mode = cont.assign_mode(v);
        const auto r = static_cast<Eigen::Index>(i);
        out(r, offset) = cont.normalize(v, mode);
        out(r, offset + 1 + static_cast<Eigen::Index>(mode)) = 1.0;
      }
      offset += static_cast<Eigen::Index>(cont.width());
    }
  }
  return out;
}

Eigen::MatrixXd encode(const DataTable& table, const EncoderSet& encoders,
                       std::span<const std::string> names, std::mt19937_64* smoothing_rng) {
  std::vector<std::size_t> rows(table.n_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return encode_rows(table, encoders, names, rows, smoothing_rng);
}

DataTable decode(const Eigen::MatrixXd& matrix, const EncoderSet& encoders,
                 std::span<const std::string> names_in) {
  const auto names = resolve_names(encoders, names_in);
  const auto width = static_cast<Eigen::Index>(encoders.total_width(names));
  if (matrix.cols() != width) {
    throw Error(ErrorCode::kShapeMismatch, "decode: matrix has " + std::to_string(matrix.cols()) +
                                               " columns, expected " + std::to_string(width));
  }
  const auto n = static_cast<std::size_t>(matrix.rows());
  std::vector<VariableSpec> vars;
  std::vector<Column> cols;
  Eigen::Index offset = 0;
  for (const auto& name : names) {
    const auto& enc = encoders.at(name);
    if (const auto* cat = std::get_if<CategoricalEncoder>(&enc)) {
      const auto k = static_cast<Eigen::Index>(cat->width());
      std::vector<std::int32_t> codes(n);
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index unused = 0;
        Eigen::Index best = 0;
        matrix.block(static_cast<Eigen::Index>(i), offset, 1, k).maxCoeff(&unused, &best);
        codes[i] = static_cast<std::int32_t>(best);
      }
      vars.push_back(VariableSpec{name, VariableKind::kCategorical, cat->categories, std::nullopt});
      cols.emplace_back(std::move(codes));
      offset += k;
    } else {
      const auto& cont = std::get<ContinuousEncoder>(enc);
      const auto k = static_cast<Eigen::Index>(cont.n_modes());
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::Index mode = 0;
        Eigen::Index unused = 0;
        matrix.block(r, offset + 1, 1, k).maxCoeff(&unused, &mode);
        values[i] = cont.denormalize(matrix(r, offset), static_cast<std::size_t>(mode));
      }
      vars.push_back(VariableSpec{name, VariableKind::kContinuous, {}, std::nullopt});
      cols.emplace_back(std::move(values));
      offset += k + 1;
    }
  }
  if (cols.empty()) {
    return DataTable::rows_only(n);
  }
  return DataTable(TableSchema(std::move(vars)), std::move(cols));
}

}  // namespace dagsynth
