#include "rrda/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rrda/rng.hpp"

namespace rrda {

void ScenarioConfig::validate() const {
  if (input_dim < 2) throw std::invalid_argument("scenario: input_dim must be >= 2");
  if (known_classes < 2) throw std::invalid_argument("scenario: known_classes must be >= 2");
  if (samples_per_class < 2) throw std::invalid_argument("scenario: samples_per_class must be >= 2");
  if (!(blob_sigma > 0.0)) throw std::invalid_argument("scenario: blob_sigma must be positive");
  if (private_radius_jitter < 0.0 || private_angle_jitter_deg < 0.0) {
    throw std::invalid_argument("scenario: jitters must be >= 0");
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("scenario: noise_sigma must be >= 0");
  if (!translation.empty() && translation.size() != input_dim) {
    throw std::invalid_argument("scenario: translation length must equal input_dim");
  }
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void sample_blob(Matrix& out, std::size_t first_row, std::size_t count, std::span<const double> center,
                 double sigma, double extra_noise, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = first_row; r < first_row + count; ++r) {
    for (std::size_t j = 0; j < center.size(); ++j) {
      double v = center[j] + sigma * normal(rng);
      if (extra_noise > 0.0) v += extra_noise * normal(rng);
      out(r, j) = v;
    }
  }
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.known_classes;
  const std::size_t p = cfg.private_classes;
  const std::size_t x = cfg.input_dim;
  const double pi = std::numbers::pi;

  Scenario sc;
  sc.source_centers = Matrix(k, x);
  for (std::size_t c = 0; c < k; ++c) {
    const double angle = pi / 2.0 + 2.0 * pi * static_cast<double>(c) / static_cast<double>(k);
    sc.source_centers(c, 0) = cfg.class_radius * std::cos(angle);
    sc.source_centers(c, 1) = cfg.class_radius * std::sin(angle);
  }

  const double rot = cfg.rotation_deg * pi / 180.0;
  const double cr = std::cos(rot);
  const double sr = std::sin(rot);
  sc.target_centers = Matrix(k + p, x);
  for (std::size_t c = 0; c < k; ++c) {
    const double a = sc.source_centers(c, 0);
    const double b = sc.source_centers(c, 1);
    sc.target_centers(c, 0) = cr * a - sr * b;
    sc.target_centers(c, 1) = sr * a + cr * b;
    for (std::size_t j = 2; j < x; ++j) sc.target_centers(c, j) = sc.source_centers(c, j);
    if (!cfg.translation.empty()) {
      for (std::size_t j = 0; j < x; ++j) sc.target_centers(c, j) += cfg.translation[j];
    }
  }

  // Private classes sit on the source decision-boundary directions, halfway
  // between adjacent known classes; every further K of them go one ring out.
  Rng placement = make_rng(cfg.seed, "scenario-placement");
  const double angle_jitter = cfg.private_angle_jitter_deg * pi / 180.0;
  std::uniform_real_distribution<double> angle_dist(-angle_jitter, angle_jitter);
  std::uniform_real_distribution<double> jitter_dist(-cfg.private_radius_jitter, cfg.private_radius_jitter);
  const double min_sep = cfg.min_separation_sigmas * cfg.blob_sigma;
  std::vector<double> candidate(x, 0.0);
  for (std::size_t c = 0; c < p; ++c) {
    const double boundary = pi / 2.0 + 2.0 * pi * (static_cast<double>(c % k) + 0.5) / static_cast<double>(k);
    const double ring = cfg.private_radius + static_cast<double>(c / k) * min_sep;
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_placement_tries && !placed; ++attempt) {
      const double angle = boundary + angle_dist(placement);
      const double radius = ring + jitter_dist(placement);
      candidate.assign(x, 0.0);
      candidate[0] = radius * std::cos(angle);
      candidate[1] = radius * std::sin(angle);
      if (!cfg.translation.empty()) {
        for (std::size_t j = 0; j < x; ++j) candidate[j] += cfg.translation[j];
      }
      placed = true;
      for (std::size_t s = 0; s < k && placed; ++s) {
        if (distance(candidate, sc.source_centers.row(s)) < min_sep) placed = false;
      }
      for (std::size_t t = 0; t < k + c && placed; ++t) {
        if (distance(candidate, sc.target_centers.row(t)) < min_sep) placed = false;
      }
    }
    if (!placed) {
      throw std::runtime_error("scenario: could not place private class " + std::to_string(c) +
                               " after " + std::to_string(cfg.max_placement_tries) + " tries");
    }
    std::copy(candidate.begin(), candidate.end(), sc.target_centers.row(k + c).begin());
  }

  const std::size_t n = cfg.samples_per_class;
  Rng source_rng = make_rng(cfg.seed, "source-samples");
  sc.source.inputs = Matrix(k * n, x);
  sc.source.labels.resize(k * n);
  for (std::size_t c = 0; c < k; ++c) {
    sample_blob(sc.source.inputs, c * n, n, sc.source_centers.row(c), cfg.blob_sigma, 0.0, source_rng);
    std::fill_n(sc.source.labels.begin() + static_cast<std::ptrdiff_t>(c * n), n, c);
  }

  Rng target_rng = make_rng(cfg.seed, "target-samples");
  sc.target.inputs = Matrix((k + p) * n, x);
  sc.target.labels.resize((k + p) * n);
  for (std::size_t c = 0; c < k + p; ++c) {
    sample_blob(sc.target.inputs, c * n, n, sc.target_centers.row(c), cfg.blob_sigma, cfg.noise_sigma,
                target_rng);
    std::fill_n(sc.target.labels.begin() + static_cast<std::ptrdiff_t>(c * n), n, c);
  }
  return sc;
}

std::vector<std::size_t> aggregate_labels(const std::vector<std::size_t>& labels, std::size_t known_classes) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = std::min(labels[i], known_classes);
  return out;
}

// ---------------------------------------------------------------------------
// Feature files

std::string format_features(const Matrix& features, const std::vector<std::size_t>* labels) {
  if (labels && labels->size() != features.rows()) {
    throw std::invalid_argument("write_features: label count mismatch");
  }
  std::string out = "osda-features v1 " + std::to_string(features.rows()) + " " +
                    std::to_string(features.cols()) + " " + (labels ? "1" : "0") + "\n";
  char buf[64];
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      if (c > 0) out.push_back(' ');
      const auto res = std::to_chars(buf, buf + sizeof(buf), features(r, c));
      out.append(buf, res.ptr);
    }
    if (labels) {
      out.push_back(' ');
      out += std::to_string((*labels)[r] + 1);
    }
    out.push_back('\n');
  }
  return out;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_count(std::string_view s, std::size_t& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

FeatureFile parse_features(const std::string& text) {
  using Kind = FeatureFileErrorKind;
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      const auto nl = rest.find('\n');
      lines.push_back(rest.substr(0, nl));
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }
  if (lines.empty()) throw FeatureFileError(Kind::malformed_header, "malformed header: empty file");
  const auto head = split_ws(lines[0]);
  std::size_t n = 0, dim = 0, has = 0;
  if (head.size() != 5 || head[0] != "osda-features" || head[1] != "v1" || !parse_count(head[2], n) ||
      !parse_count(head[3], dim) || !parse_count(head[4], has) || has > 1) {
    throw FeatureFileError(Kind::malformed_header,
                           "malformed header: expected 'osda-features v1 <n> <dim> <has-labels>'");
  }
  std::size_t data_lines = lines.size() - 1;
  while (data_lines > 0 && split_ws(lines[data_lines]).empty()) --data_lines;
  if (data_lines != n) {
    throw FeatureFileError(Kind::malformed_header, "malformed header: declares " + std::to_string(n) +
                                                       " rows but file has " + std::to_string(data_lines));
  }

  FeatureFile out;
  out.has_labels = has == 1;
  out.features = Matrix(n, dim);
  if (out.has_labels) out.labels.resize(n);
  const std::size_t expected = dim + (out.has_labels ? 1 : 0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = split_ws(lines[r + 1]);
    if (fields.size() != expected) {
      throw FeatureFileError(Kind::row_length_mismatch, "row " + std::to_string(r) + " has " +
                                                            std::to_string(fields.size()) + " fields, expected " +
                                                            std::to_string(expected));
    }
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw FeatureFileError(Kind::row_length_mismatch, "unparsable value '" + std::string(f) + "' at row " +
                                                              std::to_string(r) + ", col " + std::to_string(c));
      }
      if (!std::isfinite(v)) {
        throw FeatureFileError(Kind::non_finite,
                               "non-finite value at row " + std::to_string(r) + ", col " + std::to_string(c));
      }
      out.features(r, c) = v;
    }
    if (out.has_labels) {
      std::size_t label = 0;
      if (!parse_count(fields[dim], label) || label == 0) {
        throw FeatureFileError(Kind::bad_label, "bad label '" + std::string(fields[dim]) + "' at row " +
                                                    std::to_string(r) + " (labels are 1-based)");
      }
      out.labels[r] = label - 1;
    }
  }
  return out;
}

void write_features(const std::filesystem::path& path, const Matrix& features,
                    const std::vector<std::size_t>* labels) {
  const std::string text = format_features(features, labels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureFileError(FeatureFileErrorKind::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FeatureFileError(FeatureFileErrorKind::io, "failed writing " + path.string());
}

void write_features(const std::filesystem::path& path, const LabeledSet& set) {
  write_features(path, set.inputs, &set.labels);
}

FeatureFile read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureFileError(FeatureFileErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_features(ss.str());
}

}  // namespace rrda
