#include "srres/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "srres/config.hpp"
#include "srres/imaging.hpp"
#include "srres/png_io.hpp"
#include "srres/training.hpp"
#include "srres/variational.hpp"

namespace srres::cli {

namespace fs = std::filesystem;

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset load_dataset(const fs::path& root) {
  const auto hr_files = list_pngs(root / "hr");
  const fs::path lr_dir = root / "lr";
  if (hr_files.empty()) throw std::runtime_error("no PNG files in '" + (root / "hr").string() + "'");
  Dataset d;
  for (const fs::path& hr : hr_files) {
    const fs::path lr = lr_dir / hr.filename();
    if (!fs::exists(lr)) throw std::runtime_error("'" + lr.string() + "' is missing for '" + hr.string() + "'");
    d.ids.push_back(hr.stem().string());
    d.hr.push_back(load_png(hr));
    d.lr.push_back(load_png(lr));
  }
  return d;
}

namespace {

std::string numbered(std::size_t i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i << ".png";
  return os.str();
}

std::vector<Image> load_dir(const fs::path& dir) {
  std::vector<Image> out;
  for (const fs::path& p : list_pngs(dir)) out.push_back(load_png(p));
  if (out.empty()) throw std::runtime_error("no PNG files in '" + dir.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
}

/// Flags of a verb as `key=value` lines.
std::string echo_settings(const std::map<std::string, std::string>& s) {
  std::string out;
  for (const auto& [k, v] : s) out += k + "=" + v + "\n";
  return out;
}

std::string str(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SRRES_SEED, when set, replaces the default seed.
std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("SRRES_SEED");
  if (s == nullptr || *s == '\0') return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("SRRES_SEED='") + s + "' is not an unsigned integer");
  }
}

Overrides collect_overrides(const std::vector<std::string>& sets) {
  Overrides o;
  for (const auto& s : sets) o.push_back(parse_override(s));
  return o;
}

TrainConfig resolve_train(TrainConfig defaults, const std::string& file, const std::vector<std::string>& sets) {
  defaults.seed = env_seed(defaults.seed);
  return resolve_config(defaults, file, collect_overrides(sets));
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_config_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override, key=value (repeatable)");
}

// ---------------------------------------------------------------------------

struct DegradeArgs {
  std::string in, out;
  int scale = 4;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int do_degrade(const DegradeArgs& a, std::ostream& err) {
  const std::uint64_t seed = a.seed_given ? a.seed : env_seed(0);
  DegradationSpec spec{a.scale, a.sigma / 255.0, seed};
  spec.validate();
  const auto files = list_pngs(a.in);
  if (files.empty()) throw std::runtime_error("no PNG files in '" + a.in + "'");
  const std::string settings = echo_settings({{"in", a.in},
                                              {"out", a.out},
                                              {"scale", std::to_string(a.scale)},
                                              {"sigma", str(a.sigma)},
                                              {"seed", std::to_string(seed)}});
  err << "degrade: resolved settings\n" << settings;
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < files.size(); ++i) {
    DegradationSpec s = spec;
    s.seed = seed + i;
    save_png(degrade(load_png(files[i]), s), fs::path(a.out) / files[i].filename());
  }
  write_text(fs::path(a.out) / "config.txt", settings);
  err << "degrade: wrote " << files.size() << " images to " << a.out << "\n";
  return kOk;
}

struct TrainSrArgs {
  Common common;
  std::string data, out, preset = "full", resume;
  long stop_after = 0;
};

int do_train_sr(const TrainSrArgs& a, std::ostream& err) {
  const Dataset d = load_dataset(a.data);
  std::vector<SamplePair> pairs;
  for (std::size_t i = 0; i < d.ids.size(); ++i) pairs.push_back({d.lr[i], d.hr[i]});
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.stop_after = a.stop_after;
  opts.on_sr_step = [&err](const SrStepRecord& r, const nn::GeneratorSR&) {
    if (r.iteration % 100 == 0 || r.iteration == 1) {
      err << "train-sr: iteration " << r.iteration << " loss " << r.total << " l1 " << r.terms.l1 << "\n";
    }
  };
  if (!a.resume.empty()) {
    if (!a.common.config.empty() || !a.common.sets.empty()) {
      throw UsageError("--resume takes its configuration from the checkpoint");
    }
    const Archive ckpt = load_checkpoint(a.resume);
    err << "train-sr: resuming with\n" << echo_config(checkpoint_config(ckpt));
    resume_sr(ckpt, pairs, opts);
  } else {
    TrainConfig defaults;
    if (a.preset == "full") {
      defaults = default_config(Stage::sr);
    } else if (a.preset == "desk") {
      defaults = desk_preset();
    } else {
      throw UsageError("unknown preset '" + a.preset + "' (expected full or desk)");
    }
    const TrainConfig cfg = resolve_train(defaults, a.common.config, a.common.sets);
    err << "train-sr: resolved config\n" << echo_config(cfg);
    train_sr(cfg, pairs, opts);
  }
  err << "train-sr: finished, outputs in " << a.out << "\n";
  return kOk;
}

struct TrainDomainArgs {
  Common common;
  std::string source, target, out;
  long stop_after = 0;
  bool freeze = false;
};

int do_train_domain(const TrainDomainArgs& a, std::ostream& err) {
  const TrainConfig cfg = resolve_train(default_config(Stage::domain), a.common.config, a.common.sets);
  err << "train-domain: resolved config\n" << echo_config(cfg);
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.stop_after = a.stop_after;
  opts.freeze_discriminator = a.freeze;
  opts.on_domain_step = [&err](const DomainStepRecord& r, const nn::DomainGenerator&) {
    if (r.iteration % 100 == 0 || r.iteration == 1) {
      err << "train-domain: iteration " << r.iteration << " epoch " << r.epoch << " loss " << r.total << "\n";
    }
  };
  train_domain(cfg, load_dir(a.source), load_dir(a.target), opts);
  err << "train-domain: finished, outputs in " << a.out << "\n";
  return kOk;
}

struct GenerateArgs {
  std::string ckpt, hr, out;
};

int do_generate(const GenerateArgs& a, std::ostream& err) {
  const Archive ckpt = load_checkpoint(a.ckpt);
  const TrainConfig cfg = checkpoint_config(ckpt);
  const nn::DomainGenerator gd = load_domain_generator(ckpt);
  const std::string settings =
      echo_settings({{"ckpt", a.ckpt}, {"hr", a.hr}, {"out", a.out}, {"scale", std::to_string(cfg.scale)}});
  err << "generate-lr: resolved settings\n" << settings;
  const auto pairs = generate_lr_dataset(gd, load_dir(a.hr), cfg.scale);
  save_dataset(a.out, pairs);
  write_text(fs::path(a.out) / "config.txt", settings);
  err << "generate-lr: wrote " << pairs.size() << " pairs to " << a.out << "\n";
  return kOk;
}

struct InferArgs {
  std::string ckpt, in, out;
  int scale = 0;
  double sigma = -1.0;
  bool ensemble = false;
};

int do_infer(const InferArgs& a, std::ostream& err) {
  const Archive ckpt = load_checkpoint(a.ckpt);
  const nn::GeneratorSR g = load_generator(ckpt);
  if (a.scale != 0 && a.scale != g.config().scale) {
    throw UsageError("--scale " + std::to_string(a.scale) + " does not match the checkpoint's scale " +
                     std::to_string(g.config().scale));
  }
  const Image lr = load_png(a.in);
  const bool fixed_sigma = a.sigma >= 0.0;
  err << "infer: resolved settings\n"
      << echo_settings({{"ckpt", a.ckpt},
                        {"in", a.in},
                        {"out", a.out},
                        {"scale", std::to_string(g.config().scale)},
                        {"sigma", fixed_sigma ? str(a.sigma) : "estimate"},
                        {"ensemble", a.ensemble ? "true" : "false"}});
  auto model = [&](const Image& x) {
    return g.infer(x, fixed_sigma ? a.sigma / 255.0 : estimate_noise_sigma(x));
  };
  save_png(a.ensemble ? self_ensemble(model, lr) : model(lr), a.out);
  return kOk;
}

struct EvaluateArgs {
  Common common;
  std::string ckpt, data, out;
  bool ensemble = false, json = false;
  int crop = -2;
};

int do_evaluate(const EvaluateArgs& a, std::ostream& err) {
  const Archive ckpt = load_checkpoint(a.ckpt);
  const nn::GeneratorSR g = load_generator(ckpt);
  EvalConfig defaults;
  defaults.scale = g.config().scale;
  Overrides overrides = collect_overrides(a.common.sets);
  if (a.ensemble) overrides.emplace_back("ensemble", "true");
  if (a.json) overrides.emplace_back("json", "true");
  if (a.crop != -2) overrides.emplace_back("crop_border", std::to_string(a.crop));
  const EvalConfig cfg = resolve_config(defaults, a.common.config, overrides);
  err << "evaluate: resolved config\n" << echo_config(cfg);
  const Dataset d = load_dataset(a.data);
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < d.ids.size(); ++i) items.push_back({d.ids[i], d.lr[i], d.hr[i]});
  const MetricReport report = evaluate_dataset(g, items, cfg, nn::FeatureExtractor::named(cfg.extractor));
  for (const MetricRow& row : report.rows) {
    if (!row.ok()) err << "evaluate: " << row.id << ": " << row.error << "\n";
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, report.csv());
  if (cfg.json) {
    fs::path json = out;
    json.replace_extension(".json");
    write_text(json, report.json());
  }
  err << "evaluate: " << report.scored << "/" << report.rows.size() << " scored, mean psnr " << report.mean_psnr
      << " ssim " << report.mean_ssim << " lpips " << report.mean_lpips << "\n";
  return kOk;
}

struct SolveArgs {
  std::string in, out, trace;
  int scale = 4;
  double lambda = 0.01;
  double slope = 0.25;
  int iterations = 500;
  double tol = 1e-6;
};

int do_solve(const SolveArgs& a, std::ostream& err) {
  const Image y = load_png(a.in);
  EnergyModel model;
  model.scale = a.scale;
  model.lam = a.lambda;
  model.bank = derivative_filter_bank(y.channels());
  model.phi.slopes = {a.slope};
  model.validate();
  model.step = 1.0 / estimate_lipschitz(model, y.channels(), y.height() * a.scale, y.width() * a.scale);
  err << "solve: resolved settings\n"
      << echo_settings({{"in", a.in},
                        {"out", a.out},
                        {"scale", std::to_string(a.scale)},
                        {"lambda", str(a.lambda)},
                        {"slope", str(a.slope)},
                        {"iterations", std::to_string(a.iterations)},
                        {"tol", str(a.tol)},
                        {"step", str(model.step)}});
  const SolveResult r = pgm_solve(model, y, BallConstraint{}, a.iterations, a.tol, a.trace);
  save_png(r.x, a.out);
  err << "solve: " << r.iterations << " iterations, " << (r.converged ? "converged" : "not converged")
      << ", energy " << r.energies.back() << "\n";
  return kOk;
}

}  // namespace

void save_dataset(const fs::path& root, const std::vector<SamplePair>& pairs) {
  fs::create_directories(root / "hr");
  fs::create_directories(root / "lr");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    save_png(pairs[i].hr, root / "hr" / numbered(i));
    save_png(pairs[i].lr, root / "lr" / numbered(i));
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Super-resolution training and inference toolkit", "srres_cli"};
  app.require_subcommand(1);

  DegradeArgs degrade_args;
  auto* degrade_cmd = app.add_subcommand("degrade", "bicubic downscale plus Gaussian noise over a directory");
  degrade_cmd->add_option("--in", degrade_args.in, "input directory")->required()->check(CLI::ExistingDirectory);
  degrade_cmd->add_option("--out", degrade_args.out, "output directory")->required();
  degrade_cmd->add_option("--scale", degrade_args.scale, "downscale factor")->check(CLI::IsMember({1, 2, 4}));
  degrade_cmd->add_option("--sigma", degrade_args.sigma, "noise level in 8-bit units")->check(CLI::NonNegativeNumber);
  degrade_cmd->add_option("--seed", degrade_args.seed, "noise seed")->each([&](const std::string&) {
    degrade_args.seed_given = true;
  });

  TrainDomainArgs domain_args;
  auto* domain_cmd = app.add_subcommand("train-domain", "train the domain generator G_d");
  domain_cmd->add_option("--source", domain_args.source, "real low-resolution images")->required();
  domain_cmd->add_option("--target", domain_args.target, "clean high-resolution images")->required();
  domain_cmd->add_option("--out", domain_args.out, "output directory")->required();
  domain_cmd->add_option("--stop-after", domain_args.stop_after, "stop after this many iterations");
  domain_cmd->add_flag("--freeze-d", domain_args.freeze, "never update the discriminator");
  add_config_flags(domain_cmd, domain_args.common);

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate-lr", "build an LR/HR dataset with a trained G_d");
  gen_cmd->add_option("--ckpt", gen_args.ckpt, "domain checkpoint")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--hr", gen_args.hr, "high-resolution images")->required();
  gen_cmd->add_option("--out", gen_args.out, "dataset root")->required();

  TrainSrArgs sr_args;
  auto* sr_cmd = app.add_subcommand("train-sr", "train the SR generator");
  sr_cmd->add_option("--data", sr_args.data, "dataset root with hr/ and lr/")->required();
  sr_cmd->add_option("--out", sr_args.out, "output directory")->required();
  sr_cmd->add_option("--preset", sr_args.preset, "full or desk");
  sr_cmd->add_option("--resume", sr_args.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  sr_cmd->add_option("--stop-after", sr_args.stop_after, "stop after this many iterations");
  add_config_flags(sr_cmd, sr_args.common);

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "super-resolve one image");
  infer_cmd->add_option("--ckpt", infer_args.ckpt, "SR checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--in", infer_args.in, "LR PNG")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer_args.out, "SR PNG")->required();
  infer_cmd->add_option("--scale", infer_args.scale, "expected scale factor");
  infer_cmd->add_option("--sigma", infer_args.sigma, "noise level in 8-bit units (default: estimated)")
      ->check(CLI::NonNegativeNumber);
  infer_cmd->add_flag("--ensemble", infer_args.ensemble, "average over the eight flips and rotations");

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "PSNR, SSIM and LPIPS over a paired dataset");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "SR checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data, "dataset root with hr/ and lr/")->required();
  eval_cmd->add_option("--out", eval_args.out, "report CSV")->required();
  eval_cmd->add_flag("--ensemble", eval_args.ensemble, "self-ensemble inference");
  eval_cmd->add_flag("--json", eval_args.json, "also write a JSON report");
  eval_cmd->add_option("--crop-border", eval_args.crop, "border pixels removed before scoring");
  add_config_flags(eval_cmd, eval_args.common);

  SolveArgs solve_args;
  auto* solve_cmd = app.add_subcommand("solve", "classical proximal gradient reconstruction");
  solve_cmd->add_option("--in", solve_args.in, "LR PNG")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--out", solve_args.out, "output PNG")->required();
  solve_cmd->add_option("--scale", solve_args.scale, "upscale factor")->check(CLI::IsMember({1, 2, 4}));
  solve_cmd->add_option("--lambda", solve_args.lambda, "regularization weight")->check(CLI::NonNegativeNumber);
  solve_cmd->add_option("--slope", solve_args.slope, "PReLU slope of the potential");
  solve_cmd->add_option("--iterations", solve_args.iterations, "iteration cap")->check(CLI::PositiveNumber);
  solve_cmd->add_option("--tol", solve_args.tol, "relative-change stopping tolerance");
  solve_cmd->add_option("--trace", solve_args.trace, "energy trace CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (degrade_cmd->parsed()) return do_degrade(degrade_args, err);
    if (domain_cmd->parsed()) return do_train_domain(domain_args, err);
    if (gen_cmd->parsed()) return do_generate(gen_args, err);
    if (sr_cmd->parsed()) return do_train_sr(sr_args, err);
    if (infer_cmd->parsed()) return do_infer(infer_args, err);
    if (eval_cmd->parsed()) return do_evaluate(eval_args, err);
    if (solve_cmd->parsed()) return do_solve(solve_args, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  err << app.help();
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace srres::cli
