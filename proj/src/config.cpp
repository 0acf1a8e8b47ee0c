#include "srres/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace srres {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* type) {
  throw ConfigError("invalid value '" + value + "' for key '" + key + "' (expected " + type + ")");
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const char* type) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) bad_value(key, value, type);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "boolean");
}

template <class T>
std::string format_number(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Cfg>
struct Field {
  std::string key;
  std::function<void(Cfg&, const std::string&, const std::string&)> set;
  std::function<std::string(const Cfg&)> get;
};

template <class Cfg, class T>
Field<Cfg> number_field(const std::string& key, T Cfg::*member, const char* type) {
  return {key, [member, type](Cfg& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v, type);
          },
          [member](const Cfg& c) { return format_number(c.*member); }};
}

template <class Cfg>
Field<Cfg> bool_field(const std::string& key, bool Cfg::*member) {
  return {key, [member](Cfg& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
          [member](const Cfg& c) { return std::string(c.*member ? "true" : "false"); }};
}

template <class Cfg>
Field<Cfg> string_field(const std::string& key, std::string Cfg::*member) {
  return {key, [member](Cfg& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const Cfg& c) { return c.*member; }};
}

Field<TrainConfig> weight_field(const std::string& key, double nn::LossWeights::*member) {
  return {key, [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.weights.*member = parse_number<double>(k, v, "real number");
          },
          [member](const TrainConfig& c) { return format_number(c.weights.*member); }};
}

const std::vector<Field<TrainConfig>>& train_fields() {
  using C = TrainConfig;
  static const std::vector<Field<C>> fields = [] {
    std::vector<Field<C>> f;
    f.push_back({"stage",
                 [](C& c, const std::string& k, const std::string& v) {
                   if (v == "sr") {
                     c.stage = Stage::sr;
                   } else if (v == "domain") {
                     c.stage = Stage::domain;
                   } else {
                     bad_value(k, v, "'sr' or 'domain'");
                   }
                 },
                 [](const C& c) { return std::string(stage_name(c.stage)); }});
    f.push_back(number_field<C>("seed", &C::seed, "unsigned integer"));
    f.push_back(number_field<C>("scale", &C::scale, "integer"));
    f.push_back(number_field<C>("channels", &C::channels, "integer"));
    f.push_back(number_field<C>("batch_size", &C::batch_size, "integer"));
    f.push_back(number_field<C>("patch_size", &C::patch_size, "integer"));
    f.push_back(number_field<C>("total", &C::total, "integer"));
    f.push_back(number_field<C>("steps_per_epoch", &C::steps_per_epoch, "integer"));
    f.push_back(number_field<C>("decay_start", &C::decay_start, "integer"));
    f.push_back(number_field<C>("base_lr", &C::base_lr, "real number"));
    f.push_back(number_field<C>("adam_beta1", &C::adam_beta1, "real number"));
    f.push_back(number_field<C>("adam_beta2", &C::adam_beta2, "real number"));
    f.push_back(number_field<C>("adam_eps", &C::adam_eps, "real number"));
    f.push_back(weight_field("w_per", &nn::LossWeights::per));
    f.push_back(weight_field("w_gan", &nn::LossWeights::gan));
    f.push_back(weight_field("w_tv", &nn::LossWeights::tv));
    f.push_back(weight_field("w_l1", &nn::LossWeights::l1));
    f.push_back(weight_field("w_color", &nn::LossWeights::color));
    f.push_back(weight_field("w_tex", &nn::LossWeights::tex));
    f.push_back(weight_field("w_per_domain", &nn::LossWeights::per_domain));
    f.push_back({"highpass_gan",
                 [](C& c, const std::string& k, const std::string& v) { c.weights.highpass_gan = parse_bool(k, v); },
                 [](const C& c) { return std::string(c.weights.highpass_gan ? "true" : "false"); }});
    f.push_back(bool_field<C>("highpass_dx", &C::highpass_dx));
    f.push_back(bool_field<C>("flips", &C::flips));
    f.push_back(bool_field<C>("rot90", &C::rot90));
    f.push_back(bool_field<C>("mixup", &C::mixup));
    f.push_back(number_field<C>("mixup_alpha", &C::mixup_alpha, "real number"));
    f.push_back(number_field<C>("mixup_prob", &C::mixup_prob, "real number"));
    f.push_back(number_field<C>("features", &C::features, "integer"));
    f.push_back(number_field<C>("kernel", &C::kernel, "integer"));
    f.push_back(number_field<C>("res_blocks", &C::res_blocks, "integer"));
    f.push_back(number_field<C>("res_kernel", &C::res_kernel, "integer"));
    f.push_back(number_field<C>("alpha_init", &C::alpha_init, "real number"));
    f.push_back(number_field<C>("disc_base", &C::disc_base, "integer"));
    f.push_back(number_field<C>("disc_hidden", &C::disc_hidden, "integer"));
    f.push_back(number_field<C>("blur_kernel", &C::blur_kernel, "integer"));
    f.push_back(number_field<C>("blur_sigma", &C::blur_sigma, "real number"));
    f.push_back(number_field<C>("checkpoint_every", &C::checkpoint_every, "integer"));
    f.push_back(number_field<C>("keep_checkpoints", &C::keep_checkpoints, "integer"));
    f.push_back(string_field<C>("extractor", &C::extractor));
    return f;
  }();
  return fields;
}

const std::vector<Field<EvalConfig>>& eval_fields() {
  using C = EvalConfig;
  static const std::vector<Field<C>> fields = {
      number_field<C>("scale", &C::scale, "integer"),
      number_field<C>("crop_border", &C::crop_border, "integer"),
      bool_field<C>("ensemble", &C::ensemble),
      bool_field<C>("json", &C::json),
      string_field<C>("extractor", &C::extractor),
  };
  return fields;
}

template <class Cfg>
void apply(const std::vector<Field<Cfg>>& fields, Cfg& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields) {
    if (f.key == key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

template <class Cfg>
std::string echo(const std::vector<Field<Cfg>>& fields, const Cfg& cfg) {
  std::string out;
  for (const auto& f : fields) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

Overrides parse_lines(std::istream& is, const std::string& origin) {
  Overrides out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

const char* stage_name(Stage s) { return s == Stage::sr ? "sr" : "domain"; }

void TrainConfig::validate() const {
  require(scale == 1 || scale == 2 || scale == 4, "scale must be 1, 2 or 4");
  require(channels == 1 || channels == 3, "channels must be 1 or 3");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total >= 1, "total must be >= 1");
  require(steps_per_epoch >= 0, "steps_per_epoch must be >= 0");
  require(base_lr > 0.0 && std::isfinite(base_lr), "base_lr must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0,1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0,1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(mixup_alpha > 0.0, "mixup_alpha must be positive");
  require(mixup_prob >= 0.0 && mixup_prob <= 1.0, "mixup_prob must lie in [0,1]");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(keep_checkpoints >= 1, "keep_checkpoints must be >= 1");
  require(blur_kernel >= 3 && blur_kernel % 2 == 1, "blur_kernel must be odd and >= 3");
  require(blur_sigma > 0.0, "blur_sigma must be positive");
  if (stage == Stage::sr) {
    require(patch_size >= 8, "sr patch_size must be >= 8 (noise estimation needs 8x8)");
    require(batch_size >= 2 || weights.gan == 0.0,
            "sr batch_size must be >= 2 while w_gan > 0 (discriminator batch norm)");
  } else {
    require(decay_start >= 0 && decay_start < total, "decay_start must lie in [0,total)");
    require(patch_size >= patch_discriminator().receptive_field(),
            "domain patch_size is smaller than the discriminator receptive field");
  }
  try {
    weights.validate();
    if (stage == Stage::sr) {
      generator_sr().validate();
      hr_discriminator().validate();
    } else {
      domain_generator().validate();
      patch_discriminator().validate();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

nn::GeneratorSRConfig TrainConfig::generator_sr() const {
  nn::GeneratorSRConfig g;
  g.scale = scale;
  g.channels = channels;
  g.features = features;
  g.kernel = kernel;
  g.res_blocks = res_blocks;
  g.res_kernel = res_kernel;
  g.alpha_init = alpha_init;
  return g;
}

nn::DomainGeneratorConfig TrainConfig::domain_generator() const {
  nn::DomainGeneratorConfig g;
  g.channels = channels;
  g.features = features;
  g.res_blocks = res_blocks;
  g.kernel = kernel;
  return g;
}

nn::HrDiscriminatorConfig TrainConfig::hr_discriminator() const {
  nn::HrDiscriminatorConfig d;
  d.channels = channels;
  d.base = disc_base;
  d.patch = patch_size * scale;
  d.hidden = disc_hidden;
  return d;
}

nn::PatchDiscriminatorConfig TrainConfig::patch_discriminator() const {
  nn::PatchDiscriminatorConfig d;
  d.channels = channels;
  d.widths = {disc_base, 2 * disc_base, 4 * disc_base};
  d.kernel = 5;
  return d;
}

TrainConfig default_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  if (stage == Stage::domain) {
    c.patch_size = 128;
    c.total = 300;
    c.base_lr = 2e-4;
    c.adam_beta1 = 0.5;
    c.kernel = 3;
    c.res_blocks = 8;
  }
  return c;
}

TrainConfig desk_preset() {
  TrainConfig c = default_config(Stage::sr);
  c.total = 200;
  c.batch_size = 4;
  c.patch_size = 16;
  c.res_blocks = 2;
  return c;
}

void EvalConfig::validate() const {
  require(scale == 1 || scale == 2 || scale == 4, "scale must be 1, 2 or 4");
  require(crop_border >= -1, "crop_border must be >= 0 (or -1 for the scale)");
}

Overrides parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  return parse_lines(is, path.string());
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not key=value");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  apply(train_fields(), cfg, key, value);
}

void apply_setting(EvalConfig& cfg, const std::string& key, const std::string& value) {
  apply(eval_fields(), cfg, key, value);
}

TrainConfig resolve_config(TrainConfig cfg, const std::filesystem::path& file, const Overrides& overrides) {
  const Stage stage = cfg.stage;
  if (!file.empty()) {
    for (const auto& [k, v] : parse_config_file(file)) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  if (cfg.stage != stage) {
    throw ConfigError(std::string("config sets stage '") + stage_name(cfg.stage) + "' but this command runs '" +
                      stage_name(stage) + "'");
  }
  cfg.validate();
  return cfg;
}

EvalConfig resolve_config(EvalConfig cfg, const std::filesystem::path& file, const Overrides& overrides) {
  if (!file.empty()) {
    for (const auto& [k, v] : parse_config_file(file)) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::string echo_config(const TrainConfig& cfg) { return echo(train_fields(), cfg); }
std::string echo_config(const EvalConfig& cfg) { return echo(eval_fields(), cfg); }

TrainConfig parse_train_echo(const std::string& text) {
  std::istringstream is(text);
  TrainConfig cfg;
  for (const auto& [k, v] : parse_lines(is, "<stored config>")) apply_setting(cfg, k, v);
  return cfg;
}

}  // namespace srres
