#include "terraexpr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace terraexpr {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out = "invalid configuration:";
  for (const auto& i : items) out += "\n  " + i;
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

std::uint64_t to_uint(const std::string& v) {
  if (v.empty() || v[0] == '-') throw std::invalid_argument("not a non-negative integer");
  std::size_t used = 0;
  const auto u = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return u;
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  std::stringstream in(v);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(to_double(trim(cell)));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)>;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
  const std::filesystem::path p(v);
  return p.is_absolute() ? p : base / p;
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"seed", [](RunConfig& c, const std::string& v, const auto&) { c.seed = to_uint(v); }},
      {"precision",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v == "oracle") c.precision = Precision::oracle;
         else if (v == "fast") c.precision = Precision::fast;
         else throw std::invalid_argument("expected oracle or fast");
       }},
      {"paths.manifest", [](RunConfig& c, const std::string& v, const auto& b) { c.manifest = resolve(b, v); }},
      {"paths.output", [](RunConfig& c, const std::string& v, const auto& b) { c.output = resolve(b, v); }},
      {"paths.split", [](RunConfig& c, const std::string& v, const auto& b) { c.split_file = resolve(b, v); }},
      {"paths.checkpoint", [](RunConfig& c, const std::string& v, const auto& b) { c.checkpoint = resolve(b, v); }},
      {"paths.gan", [](RunConfig& c, const std::string& v, const auto& b) { c.gan_dir = resolve(b, v); }},
      {"paths.references", [](RunConfig& c, const std::string& v, const auto& b) { c.references = resolve(b, v); }},
      {"paths.store", [](RunConfig& c, const std::string& v, const auto& b) { c.store = resolve(b, v); }},
      {"data.origin",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v == "all") c.origin = OriginFilter::all;
         else if (v == "collected") c.origin = OriginFilter::collected;
         else if (v == "generated") c.origin = OriginFilter::generated;
         else throw std::invalid_argument("expected all, collected or generated");
       }},
      {"net.input_resolution", [](RunConfig& c, const std::string& v, const auto&) { c.net.input_resolution = to_uint(v); }},
      {"net.width_multiplier", [](RunConfig& c, const std::string& v, const auto&) { c.net.width_multiplier = to_double(v); }},
      {"net.head", [](RunConfig& c, const std::string& v, const auto&) { c.net.head = parse_head(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v, const auto&) { c.train.batch_size = to_uint(v); }},
      {"train.lr", [](RunConfig& c, const std::string& v, const auto&) { c.train.adam.lr = to_double(v); }},
      {"train.beta1", [](RunConfig& c, const std::string& v, const auto&) { c.train.adam.beta1 = to_double(v); }},
      {"train.beta2", [](RunConfig& c, const std::string& v, const auto&) { c.train.adam.beta2 = to_double(v); }},
      {"train.eps", [](RunConfig& c, const std::string& v, const auto&) { c.train.adam.eps = to_double(v); }},
      {"train.lr_decay", [](RunConfig& c, const std::string& v, const auto&) { c.train.lr_decay = to_double(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v, const auto&) { c.train.epochs = to_uint(v); }},
      {"train.stop_at_val_accuracy",
       [](RunConfig& c, const std::string& v, const auto&) { c.train.stop_at_val_accuracy = to_double(v); }},
      {"loss.kind",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v == "focal") c.train.loss.kind = LossKind::focal;
         else if (v == "cross_entropy") c.train.loss.kind = LossKind::cross_entropy;
         else throw std::invalid_argument("expected focal or cross_entropy");
       }},
      {"loss.gamma", [](RunConfig& c, const std::string& v, const auto&) { c.train.loss.gamma = to_double(v); }},
      {"loss.alpha", [](RunConfig& c, const std::string& v, const auto&) { c.train.loss.alpha = to_doubles(v); }},
      {"loss.reduction",
       [](RunConfig& c, const std::string& v, const auto&) {
         if (v == "mean") c.train.loss.reduction = Reduction::mean;
         else if (v == "sum") c.train.loss.reduction = Reduction::sum;
         else throw std::invalid_argument("expected mean or sum");
       }},
      {"split.mode", [](RunConfig& c, const std::string& v, const auto&) { c.split.mode = parse_split_mode(v); }},
      {"split.ratios",
       [](RunConfig& c, const std::string& v, const auto&) {
         const auto r = to_doubles(v);
         if (r.size() != 3) throw std::invalid_argument("expected three comma-separated ratios");
         c.split.ratios = {r[0], r[1], r[2]};
       }},
      {"eval.partition", [](RunConfig& c, const std::string& v, const auto&) { c.eval_partition = parse_partition(v); }},
      {"gan.resolution", [](RunConfig& c, const std::string& v, const auto&) { c.gan.net.resolution = to_uint(v); }},
      {"gan.generator_channels",
       [](RunConfig& c, const std::string& v, const auto&) { c.gan.net.generator_channels = to_uint(v); }},
      {"gan.residual_blocks", [](RunConfig& c, const std::string& v, const auto&) { c.gan.net.residual_blocks = to_uint(v); }},
      {"gan.discriminator_channels",
       [](RunConfig& c, const std::string& v, const auto&) { c.gan.net.discriminator_channels = to_uint(v); }},
      {"gan.discriminator_layers",
       [](RunConfig& c, const std::string& v, const auto&) { c.gan.net.discriminator_layers = to_uint(v); }},
      {"gan.attention_bias", [](RunConfig& c, const std::string& v, const auto&) { c.gan.net.attention_bias = to_double(v); }},
      {"gan.lambda_adv", [](RunConfig& c, const std::string& v, const auto&) { c.gan.lambdas.adversarial = to_double(v); }},
      {"gan.lambda_au", [](RunConfig& c, const std::string& v, const auto&) { c.gan.lambdas.au = to_double(v); }},
      {"gan.lambda_att", [](RunConfig& c, const std::string& v, const auto&) { c.gan.lambdas.attention = to_double(v); }},
      {"gan.lambda_cyc", [](RunConfig& c, const std::string& v, const auto&) { c.gan.lambdas.cycle = to_double(v); }},
      {"gan.lr", [](RunConfig& c, const std::string& v, const auto&) { c.gan.adam.lr = to_double(v); }},
      {"gan.beta1", [](RunConfig& c, const std::string& v, const auto&) { c.gan.adam.beta1 = to_double(v); }},
      {"gan.batch_size", [](RunConfig& c, const std::string& v, const auto&) { c.gan.batch_size = to_uint(v); }},
      {"gan.steps", [](RunConfig& c, const std::string& v, const auto&) { c.gan.steps = to_uint(v); }},
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

ReferenceAUs RunConfig::reference_aus() const {
  return references ? read_reference_aus(*references) : default_reference_aus();
}

bool RunConfig::keep(const ImageRecord& r) const {
  switch (origin) {
    case OriginFilter::collected: return r.origin == Origin::collected;
    case OriginFilter::generated: return r.origin == Origin::generated;
    default: return true;
  }
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides) {
  std::map<std::string, Setter> table(setters().begin(), setters().end());
  RunConfig cfg;
  std::vector<std::string> violations;
  std::map<std::string, std::size_t> seen;
  bool manifest_set = false;

  auto apply = [&](const std::string& where, const std::string& key, const std::string& value) {
    auto it = table.find(key);
    if (it == table.end()) {
      violations.push_back(where + "unknown key '" + key + "'");
      return;
    }
    try {
      it->second(cfg, value, base_dir);
      if (key == "paths.manifest") manifest_set = true;
    } catch (const std::exception& e) {
      violations.push_back(where + key + ": invalid value '" + value + "' (" + e.what() + ")");
    }
  };

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      violations.push_back(where + "expected 'key = value'");
      continue;
    }
    const auto key = trim(body.substr(0, eq));
    if (seen.count(key)) {
      violations.push_back(where + "duplicate key '" + key + "' (first on line " + std::to_string(seen[key]) + ")");
      continue;
    }
    seen[key] = line_no;
    apply(where, key, trim(body.substr(eq + 1)));
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      violations.push_back("override '" + o + "': expected key=value");
      continue;
    }
    apply("override: ", trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  if (const char* env = std::getenv("TERRAEXPR_SEED")) {
    try {
      cfg.seed = to_uint(env);
    } catch (const std::exception&) {
      violations.push_back(std::string("TERRAEXPR_SEED: invalid value '") + env + "'");
    }
  }
  cfg.train.seed = cfg.seed;
  cfg.split.seed = cfg.seed;
  cfg.gan.seed = cfg.seed;

  auto check = [&](const std::function<void()>& validate) {
    try {
      validate();
    } catch (const std::invalid_argument& e) {
      // "invalid X config: a; b;" becomes one violation per item
      const std::string what = e.what();
      const auto colon = what.find("config: ");
      if (colon == std::string::npos) {
        violations.push_back(what);
        return;
      }
      std::istringstream items(what.substr(colon + 8));
      for (std::string item; std::getline(items, item, ';');) {
        const auto first = item.find_first_not_of(' ');
        if (first != std::string::npos) violations.push_back(item.substr(first));
      }
    }
  };
  check([&] { cfg.net.validate(); });
  check([&] { cfg.train.validate(); });
  check([&] { cfg.gan.net.validate(); });
  check([&] { cfg.gan.lambdas.validate(); });
  check([&] { cfg.gan.adam.validate(); });
  check([&] {
    if (cfg.gan.batch_size == 0) throw std::invalid_argument("gan.batch_size must be >= 1");
  });
  check([&] { cfg.split.validate(); });

  if (!manifest_set) {
    violations.push_back("paths.manifest is required");
  } else if (!std::filesystem::exists(cfg.manifest)) {
    violations.push_back("paths.manifest: " + cfg.manifest.string() + " does not exist");
  }
  if (cfg.references && !std::filesystem::exists(*cfg.references)) {
    violations.push_back("paths.references: " + cfg.references->string() + " does not exist");
  }
  if (!violations.empty()) throw ConfigError(std::move(violations));
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path.string()});
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path(), overrides);
}

}  // namespace terraexpr
