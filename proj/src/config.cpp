#include "rrda/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace rrda {

ConfigError::ConfigError(const std::string& key, std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": key '" + key + "': " + message
                                  : "config key '" + key + "': " + message),
      key_(key),
      line_(line) {}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Parsers throw std::invalid_argument with a short reason; callers wrap it in ConfigError.
double to_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::string from_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += from_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Field real(std::string key, double& (*ref)(RunConfig&)) {
  return {std::move(key), [ref](RunConfig& c, const std::string& v) { ref(c) = to_double(v); },
          [ref](const RunConfig& c) { return from_double(ref(const_cast<RunConfig&>(c))); }};
}

Field count(std::string key, std::size_t& (*ref)(RunConfig&)) {
  return {std::move(key), [ref](RunConfig& c, const std::string& v) { ref(c) = static_cast<std::size_t>(to_u64(v)); },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

Field flag(std::string key, bool& (*ref)(RunConfig&)) {
  return {std::move(key), [ref](RunConfig& c, const std::string& v) { ref(c) = to_bool(v); },
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename E>
Field choice(std::string key, E& (*ref)(RunConfig&), std::vector<std::pair<std::string, E>> names) {
  return {std::move(key),
          [ref, names](RunConfig& c, const std::string& v) {
            for (const auto& [name, value] : names) {
              if (name == v) {
                ref(c) = value;
                return;
              }
            }
            std::string allowed;
            for (const auto& n : names) allowed += (allowed.empty() ? "" : ", ") + n.first;
            throw std::invalid_argument("expected one of " + allowed + ", got '" + v + "'");
          },
          [ref, names](const RunConfig& c) {
            const E cur = ref(const_cast<RunConfig&>(c));
            for (const auto& [name, value] : names) {
              if (value == cur) return name;
            }
            return std::string("?");
          }};
}

#define RRDA_REF(expr) +[](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back({"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back({"eval.baseline_taus",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<double> taus;
                   for (const auto& item : split_list(v)) taus.push_back(to_double(item));
                   c.baseline_taus = std::move(taus);
                 },
                 [](const RunConfig& c) { return join(c.baseline_taus); }});
    t.push_back(choice<KnownAccuracy>("eval.known_accuracy", RRDA_REF(known_accuracy),
                                      {{"per-class", KnownAccuracy::per_class_mean},
                                       {"overall", KnownAccuracy::overall}}));

    t.push_back(count("scenario.input_dim", RRDA_REF(scenario.input_dim)));
    t.push_back(count("scenario.known_classes", RRDA_REF(scenario.known_classes)));
    t.push_back(count("scenario.private_classes", RRDA_REF(scenario.private_classes)));
    t.push_back(count("scenario.samples_per_class", RRDA_REF(scenario.samples_per_class)));
    t.push_back(real("scenario.blob_sigma", RRDA_REF(scenario.blob_sigma)));
    t.push_back(real("scenario.class_radius", RRDA_REF(scenario.class_radius)));
    t.push_back(real("scenario.private_radius", RRDA_REF(scenario.private_radius)));
    t.push_back(real("scenario.private_radius_jitter", RRDA_REF(scenario.private_radius_jitter)));
    t.push_back(real("scenario.private_angle_jitter_deg", RRDA_REF(scenario.private_angle_jitter_deg)));
    t.push_back(real("scenario.min_separation_sigmas", RRDA_REF(scenario.min_separation_sigmas)));
    t.push_back(real("scenario.rotation_deg", RRDA_REF(scenario.rotation_deg)));
    t.push_back({"scenario.translation",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<double> shift;
                   for (const auto& item : split_list(v)) shift.push_back(to_double(item));
                   c.scenario.translation = std::move(shift);
                 },
                 [](const RunConfig& c) { return join(c.scenario.translation); }});
    t.push_back(real("scenario.noise_sigma", RRDA_REF(scenario.noise_sigma)));
    t.push_back(count("scenario.max_placement_tries", RRDA_REF(scenario.max_placement_tries)));

    t.push_back({"source.hidden_dims",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<std::size_t> dims;
                   for (const auto& item : split_list(v)) dims.push_back(static_cast<std::size_t>(to_u64(item)));
                   c.source.hidden_dims = std::move(dims);
                 },
                 [](const RunConfig& c) { return join(c.source.hidden_dims); }});
    t.push_back(count("source.feature_dim", RRDA_REF(source.feature_dim)));
    t.push_back(count("source.epochs", RRDA_REF(source.epochs)));
    t.push_back(count("source.batch_size", RRDA_REF(source.batch_size)));
    t.push_back(real("source.lr", RRDA_REF(source.learning_rate)));
    t.push_back(real("source.weight_decay", RRDA_REF(source.weight_decay)));

    t.push_back(real("synth.lambda_reg", RRDA_REF(synth.lambda_reg)));
    t.push_back(count("synth.steps", RRDA_REF(synth.steps)));
    t.push_back(real("synth.opt_lr", RRDA_REF(synth.opt_lr)));
    t.push_back(real("synth.ce_threshold_frac", RRDA_REF(synth.ce_threshold_frac)));
    t.push_back(real("synth.ent_threshold_frac", RRDA_REF(synth.ent_threshold_frac)));
    t.push_back(real("synth.eps_known", RRDA_REF(synth.eps_known)));
    t.push_back(real("synth.eps_unknown", RRDA_REF(synth.eps_unknown)));
    t.push_back(real("synth.init_noise_scale", RRDA_REF(synth.init_noise_scale)));
    t.push_back(count("synth.k_prime", RRDA_REF(synth.k_prime)));
    t.push_back(count("synth.per_class_cap", RRDA_REF(synth.per_class_cap)));
    t.push_back(flag("synth.optimize", RRDA_REF(synth.optimize)));

    t.push_back(choice<HeadInit>("classifier.init", RRDA_REF(head_init),
                                 {{"source", HeadInit::source}, {"random", HeadInit::random}}));
    t.push_back(count("classifier.epochs", RRDA_REF(head.epochs)));
    t.push_back(count("classifier.batch_size", RRDA_REF(head.batch_size)));
    t.push_back(real("classifier.lr", RRDA_REF(head.learning_rate)));
    t.push_back(real("classifier.momentum", RRDA_REF(head.momentum)));
    t.push_back(real("classifier.weight_decay", RRDA_REF(head.weight_decay)));

    t.push_back(choice<AdaptMethod>("adapt.method", RRDA_REF(adapt.method),
                                    {{"shot", AdaptMethod::shot}, {"aad", AdaptMethod::aad}}));
    t.push_back(count("adapt.epochs", RRDA_REF(adapt.epochs)));
    t.push_back(count("adapt.batch_size", RRDA_REF(adapt.batch_size)));
    t.push_back(real("adapt.lr", RRDA_REF(adapt.lr)));
    t.push_back(real("adapt.momentum", RRDA_REF(adapt.momentum)));
    t.push_back(real("adapt.weight_decay", RRDA_REF(adapt.weight_decay)));
    t.push_back(real("adapt.lambda_ent", RRDA_REF(adapt.lambda_ent)));
    t.push_back(real("adapt.lambda_div", RRDA_REF(adapt.lambda_div)));
    t.push_back(real("adapt.lambda_ps", RRDA_REF(adapt.lambda_ps)));
    t.push_back(real("adapt.aad_lambda", RRDA_REF(adapt.aad_lambda)));
    t.push_back(flag("adapt.aad_lambda_decay", RRDA_REF(adapt.aad_lambda_decay)));
    t.push_back(real("adapt.aad_decay_beta", RRDA_REF(adapt.aad_decay_beta)));
    t.push_back(count("adapt.knn_size", RRDA_REF(adapt.knn_size)));
    t.push_back(real("adapt.encoder_lr_scale", RRDA_REF(adapt.encoder_lr_scale)));
    t.push_back(choice<MarginalMode>("adapt.marginal", RRDA_REF(adapt.marginal),
                                     {{"batch", MarginalMode::batch}, {"dataset", MarginalMode::dataset}}));
    return t;
  }();
  return table;
}

#undef RRDA_REF

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value, std::size_t line) {
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
  if (it == table.end()) throw ConfigError(key, line, "unknown key");
  try {
    it->set(config, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, line, e.what());
  }
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(trim(assignment), 0, "override must look like section.key=value");
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line, line_no, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, line_no, "expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto hash = value.find(" #");
    if (hash != std::string::npos) value = trim(value.substr(0, hash));
    apply_setting(base, section.empty() ? key : section + "." + key, value, line_no);
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

std::string format_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "[" + s + "]\n";
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace rrda
