// umle: train / enhance / evaluate / ablate / params command-line front end.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 non-finite
// gradient during training, 1 anything else.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "umle/checkpoint.hpp"
#include "umle/config.hpp"
#include "umle/data.hpp"
#include "umle/errors.hpp"
#include "umle/filters.hpp"
#include "umle/metrics.hpp"
#include "umle/networks.hpp"
#include "umle/training.hpp"

namespace fs = std::filesystem;
using namespace umle;

namespace {

struct SeedOverride {
  bool set = false;
  std::uint64_t value = 0;
};

void print_resolved_config(const TrainConfig& cfg) {
  std::cout << "resolved config:\n";
  std::istringstream is(cfg.canonical_text());
  std::string line;
  while (std::getline(is, line)) std::cout << "  " << line << "\n";
  std::cout << "config digest: " << cfg.digest() << "\n";
}

TrainConfig load_config(const std::string& path, const SeedOverride& seed) {
  TrainConfig cfg = parse_config_file(path);
  if (seed.set) cfg.seed = seed.value;
  return cfg;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
  if (files.empty()) throw DatasetEmpty("no images in " + dir.string());
  return files;
}

int cmd_train(const std::string& config_path, const SeedOverride& seed, const std::string& resume,
              bool allow_mismatch) {
  TrainConfig cfg = load_config(config_path, seed);
  if (cfg.data_root.empty()) throw ConfigError("config must set data_root");
  print_resolved_config(cfg);

  const auto target = std::make_pair(cfg.arch.resolution, cfg.arch.resolution);
  DomainDataset low = load_dataset(fs::path(cfg.data_root) / "low", DomainTag::Low, target);
  DomainDataset normal = load_dataset(fs::path(cfg.data_root) / "normal", DomainTag::Normal, target);
  for (const auto& w : low.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : normal.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "datasets: " << low.size() << " low, " << normal.size() << " normal\n";

  Trainer trainer(cfg);
  if (!resume.empty()) {
    Checkpoint ckpt = load_checkpoint(resume, cfg.digest(), allow_mismatch);
    trainer.restore(ckpt);
    std::cout << "resumed from " << resume << " at iteration " << ckpt.iteration << "\n";
  }
  Checkpoint final_ckpt = trainer.train(low, normal);
  std::cout << "finished at iteration " << final_ckpt.iteration << "; outputs in " << cfg.out_dir
            << "\n";
  return 0;
}

int cmd_enhance(const std::string& checkpoint, const std::string& input, const std::string& output,
                const SeedOverride& seed) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint);
  Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.config_text.empty()) throw CheckpointCorrupt("checkpoint has no embedded config");
  TrainConfig cfg = parse_config_text(ckpt.config_text);
  if (seed.set) cfg.seed = seed.value;
  print_resolved_config(cfg);

  Trainer trainer(cfg);
  trainer.restore(ckpt);

  const auto files = list_images(input);
  fs::create_directories(output);
  for (const fs::path& f : files) {
    Tensor img = load_image_rgb01(f, {0, 0});
    if (!img.defined()) {
      std::cerr << "warning: undecodable image skipped: " << f.string() << "\n";
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Tensor out = trainer.model().enhance_full(img, Direction::LowToNormal);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dst = fs::path(output) / (f.stem().string() + ".png");
    save_image_png(out, dst);
    std::printf("%s -> %s  (%.1f ms)\n", f.filename().string().c_str(), dst.string().c_str(), ms);
  }
  return 0;
}

int cmd_fit_pristine(const std::string& input, const std::string& output) {
  const auto files = list_images(input);
  std::vector<Tensor> images;
  for (const fs::path& f : files) {
    Tensor img = load_image_rgb01(f, {0, 0});
    if (img.defined()) images.push_back(std::move(img));
    else std::cerr << "warning: undecodable image skipped: " << f.string() << "\n";
  }
  PristineModel model = fit_pristine(images);
  model.save(output);
  std::cout << "pristine model fit on " << model.corpus_size << " images -> " << output << "\n";
  return 0;
}

int cmd_evaluate(const std::string& input, const std::string& pristine, const std::string& out_csv) {
  PristineModel model = PristineModel::load(pristine);
  const auto files = list_images(input);

  std::ostringstream csv;
  csv << "image,niqe,entropy\n";
  double sum_niqe = 0.0, sum_entropy = 0.0;
  long count = 0;
  for (const fs::path& f : files) {
    Tensor img = load_image_rgb01(f, {0, 0});
    if (!img.defined()) {
      std::cerr << "warning: undecodable image skipped: " << f.string() << "\n";
      continue;
    }
    const double n = niqe(img, model);
    const double e = entropy_bits(img);
    char row[256];
    std::snprintf(row, sizeof row, "%s,%.6f,%.6f\n", f.filename().string().c_str(), n, e);
    csv << row;
    sum_niqe += n;
    sum_entropy += e;
    ++count;
  }
  if (count == 0) throw DatasetEmpty("no scorable images in " + input);
  char row[256];
  std::snprintf(row, sizeof row, "mean,%.6f,%.6f\n", sum_niqe / count, sum_entropy / count);
  csv << row;

  std::cout << csv.str();
  if (!out_csv.empty()) {
    std::ofstream f(out_csv);
    f << csv.str();
    if (!f) throw UmleError("cannot write " + out_csv);
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& ablation_name_str,
               const SeedOverride& seed) {
  TrainConfig cfg = load_config(config_path, seed);
  if (cfg.data_root.empty()) throw ConfigError("config must set data_root");
  const Ablation abl = ablation_from_name(ablation_name_str);
  cfg.ablation.insert(abl);
  cfg.out_dir = (fs::path(cfg.out_dir) / ("ablate_" + ablation_name_str)).string();
  print_resolved_config(cfg);

  const auto target = std::make_pair(cfg.arch.resolution, cfg.arch.resolution);
  DomainDataset low = load_dataset(fs::path(cfg.data_root) / "low", DomainTag::Low, target);
  DomainDataset normal = load_dataset(fs::path(cfg.data_root) / "normal", DomainTag::Normal, target);

  Trainer trainer(cfg);
  trainer.train(low, normal);

  // Score the enhanced low-light images at native size against a pristine
  // model fit on the normal-light corpus (also at native size).
  std::vector<Tensor> normals;
  for (const fs::path& f : list_images(fs::path(cfg.data_root) / "normal")) {
    Tensor img = load_image_rgb01(f, {0, 0});
    if (img.defined()) normals.push_back(std::move(img));
  }
  PristineModel pristine = fit_pristine(normals);

  double sum_niqe = 0.0, sum_entropy = 0.0;
  long count = 0;
  for (const fs::path& f : list_images(fs::path(cfg.data_root) / "low")) {
    Tensor img = load_image_rgb01(f, {0, 0});
    if (!img.defined()) continue;
    Tensor out = trainer.model().enhance_full(img, Direction::LowToNormal);
    sum_niqe += niqe(out, pristine);
    sum_entropy += entropy_bits(out);
    ++count;
  }
  char row[256];
  std::snprintf(row, sizeof row, "%s,%.6f,%.6f\n", ablation_name_str.c_str(), sum_niqe / count,
                sum_entropy / count);
  std::cout << "condition,niqe,entropy\n" << row;
  std::ofstream f(fs::path(cfg.out_dir) / "ablation.csv");
  f << "condition,niqe,entropy\n" << row;
  return 0;
}

int cmd_params(const std::string& config_path, const SeedOverride& seed) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path, seed);
  print_resolved_config(cfg);
  UmleModel model(cfg.arch, cfg.model_options(), cfg.seed);
  std::printf("%-22s %12s  %s\n", "component", "parameters", "shared-by");
  std::size_t total = 0;
  for (const auto& row : model.count_params()) {
    std::printf("%-22s %12zu  %s\n", row.component.c_str(), row.count, row.shared_by.c_str());
    total += row.count;
  }
  std::printf("%-22s %12zu\n", "total", total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised low-light enhancement trainer and evaluator"};
  app.require_subcommand(0, 1);

  std::string dump_kernel_path;
  app.add_option("--dump-kernel", dump_kernel_path, "write the frequency-separation kernel as CSV");

  SeedOverride seed;
  auto add_seed = [&seed](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&seed](const std::uint64_t& v) { seed.set = true; seed.value = v; },
        "override the config seed");
  };

  auto* train = app.add_subcommand("train", "train per the config file");
  std::string config_path, resume_path;
  bool allow_mismatch = false;
  train->add_option("--config", config_path, "flat key = value config file")->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_flag("--allow-config-mismatch", allow_mismatch, "resume despite a digest mismatch");
  add_seed(train);

  auto* enhance = app.add_subcommand("enhance", "apply the low->normal generator to a directory");
  std::string ckpt_path, input_dir, output_dir;
  enhance->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  enhance->add_option("--input", input_dir, "input image directory")->required();
  enhance->add_option("--output", output_dir, "output directory (PNG)")->required();
  add_seed(enhance);

  auto* evaluate = app.add_subcommand("evaluate", "no-reference metrics over a directory");
  std::string eval_input, pristine_path, eval_csv;
  evaluate->add_option("--input", eval_input, "image directory")->required();
  evaluate->add_option("--pristine", pristine_path, "pristine model file")->required();
  evaluate->add_option("--output", eval_csv, "also write the CSV here");
  add_seed(evaluate);

  auto* fitp = app.add_subcommand("fit-pristine", "fit the NIQE pristine model on a directory");
  std::string fit_input, fit_output;
  fitp->add_option("--input", fit_input, "image directory (>= 10 images, >= 96x96)")->required();
  fitp->add_option("--output", fit_output, "output model file")->required();
  add_seed(fitp);

  auto* ablate = app.add_subcommand("ablate", "train with one toggle and evaluate");
  std::string ablate_config, ablation_name_str;
  ablate->add_option("--config", ablate_config, "config file")->required();
  ablate->add_option("--ablation", ablation_name_str,
                     "no_color_d | no_texture_d | no_multiscale_d | no_cpam | no_shared_encoder")
      ->required();
  add_seed(ablate);

  auto* params = app.add_subcommand("params", "print the per-component parameter table");
  std::string params_config;
  params->add_option("--config", params_config, "config file (defaults used when omitted)");
  add_seed(params);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!dump_kernel_path.empty()) {
      dump_kernel_csv(build_gaussian_kernel(KernelSpec{}), dump_kernel_path);
      std::cout << "kernel written to " << dump_kernel_path << "\n";
      if (app.get_subcommands().empty()) return 0;
    }
    if (train->parsed()) return cmd_train(config_path, seed, resume_path, allow_mismatch);
    if (enhance->parsed()) return cmd_enhance(ckpt_path, input_dir, output_dir, seed);
    if (evaluate->parsed()) return cmd_evaluate(eval_input, pristine_path, eval_csv);
    if (fitp->parsed()) return cmd_fit_pristine(fit_input, fit_output);
    if (ablate->parsed()) return cmd_ablate(ablate_config, ablation_name_str, seed);
    if (params->parsed()) return cmd_params(params_config, seed);
    std::cout << app.help();
    return 2;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointCorrupt& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DatasetEmpty& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
