// Command-line entry point wiring every module: dataset generation, training,
// decomposition, evaluation, the classical baseline and self-verification.
//
// Exit codes: 0 success, 1 I/O or runtime failure, 2 usage error,
// 3 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "intrinsic/checkpoint.hpp"
#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"
#include "intrinsic/image_io.hpp"
#include "intrinsic/metrics.hpp"
#include "intrinsic/networks.hpp"
#include "intrinsic/retinex.hpp"
#include "intrinsic/rng.hpp"
#include "intrinsic/synth.hpp"
#include "intrinsic/train.hpp"
#include "intrinsic/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace intrinsic;

namespace {

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!f) break;
  }
  return h;
}

fs::path resolve_out_dir(std::string out, const std::string& command) {
  if (!out.empty()) return out;
  if (const char* root = std::getenv("INTRINSIC_OUT_ROOT"))
    return fs::path(root) / command;
  throw UsageError("--out is required (or set INTRINSIC_OUT_ROOT)");
}

void write_run_config(const fs::path& dir, const std::string& command, const json& resolved) {
  json j;
  j["command"] = command;
  j["config"] = resolved;
  fs::create_directories(dir);
  std::ofstream f(dir / "run_config.json");
  if (!f) throw IoError("cannot write " + (dir / "run_config.json").string());
  f << j.dump(2) << "\n";
}

std::pair<int, int> parse_canvas(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw UsageError("--canvas expects HxW, e.g. 32x32, got '" + s + "'");
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("--canvas expects HxW, e.g. 32x32, got '" + s + "'");
  }
}

bool parse_on_off(const std::string& s, const char* flag) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw UsageError(std::string(flag) + " expects on|off, got '" + s + "'");
}

// --------------------------------------------------------------------------
// Model bundle: config.json + checkpoint in one directory.
// --------------------------------------------------------------------------

struct ModelBundle {
  std::string kind;  // intrinsicnet | retinet-s1 | retinet-s2
  IntrinsicNetConfig inet_cfg;
  RetiNetConfig retinet_cfg;
  std::string stage1_dir;  // retinet-s2 only
};

void write_model_config(const fs::path& dir, const ModelBundle& b) {
  json j;
  j["model"] = b.kind;
  if (b.kind == "retinet-s2") {
    j["retinet"] = b.retinet_cfg;
    j["stage1_dir"] = b.stage1_dir;
  } else {
    j["intrinsicnet"] = b.inet_cfg;
  }
  std::ofstream f(dir / "config.json");
  if (!f) throw IoError("cannot write " + (dir / "config.json").string());
  f << j.dump(2) << "\n";
}

ModelBundle read_model_config(const fs::path& dir) {
  const fs::path file = dir / "config.json";
  std::ifstream f(file);
  if (!f) throw IoError("cannot open model config " + file.string());
  json j;
  try {
    f >> j;
    ModelBundle b;
    b.kind = j.at("model").get<std::string>();
    if (b.kind == "retinet-s2") {
      b.retinet_cfg = j.at("retinet").get<RetiNetConfig>();
      b.stage1_dir = j.value("stage1_dir", "");
    } else {
      b.inet_cfg = j.at("intrinsicnet").get<IntrinsicNetConfig>();
    }
    return b;
  } catch (const json::exception& e) {
    throw IoError("bad model config " + file.string() + ": " + e.what());
  }
}

fs::path find_checkpoint(const fs::path& dir) {
  const fs::path final = dir / "checkpoint_final.ckpt";
  if (fs::exists(final)) return final;
  throw IoError("no checkpoint found at " + final.string());
}

IntrinsicNet<float> load_intrinsic_model(const fs::path& dir) {
  const ModelBundle b = read_model_config(dir);
  if (b.kind != "intrinsicnet" && b.kind != "retinet-s1")
    throw IoError("model at " + dir.string() + " is '" + b.kind +
                  "', expected an encoder-decoder model");
  Rng rng(0);
  IntrinsicNet<float> net = IntrinsicNet<float>::build(b.inet_cfg, rng);
  model_restore<float>(net, load_checkpoint(find_checkpoint(dir)));
  return net;
}

// --------------------------------------------------------------------------
// dataset
// --------------------------------------------------------------------------

struct DatasetArgs {
  int n = 16;
  std::uint64_t seed = 0;
  std::string out;
  std::string formation = "diffuse";
  std::string canvas = "32x32";
  int min_shapes = 2, max_shapes = 5;
};

int cmd_dataset(const DatasetArgs& a) {
  const fs::path out = resolve_out_dir(a.out, "dataset");
  const auto [h, w] = parse_canvas(a.canvas);
  if (a.n < 0) throw UsageError("--n must be >= 0");
  GeneratorParams params;
  params.min_shapes = a.min_shapes;
  params.max_shapes = a.max_shapes;
  const Formation formation = formation_from_string(a.formation);
  dataset_gen(a.n, a.seed, out, formation, h, w, params);
  write_run_config(out, "dataset",
                   json{{"n", a.n},
                        {"seed", a.seed},
                        {"out", out.string()},
                        {"formation", a.formation},
                        {"canvas", a.canvas},
                        {"min_shapes", a.min_shapes},
                        {"max_shapes", a.max_shapes}});
  std::printf("count=%d formation=%s manifest_checksum=%016llx\n", a.n, a.formation.c_str(),
              static_cast<unsigned long long>(fnv1a64_file(out / "manifest.json")));
  return 0;
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------

struct TrainArgs {
  std::string model = "intrinsicnet";
  std::string data;
  std::string out;
  std::string config;
  std::string imf = "on";
  std::string augment = "off";
  std::string stage1_dir;
  std::string resume;
  bool gt_gradients = false;
  bool full_scale = false;
  int epochs = 1;
  int batch = 16;
  std::uint64_t seed = 0;
  double lr0 = 1e-3, lr_end = 1e-5, power = 1.0;
  bool lr0_given = false, lr_end_given = false;
  double momentum = 0.9, weight_decay = 5e-4;
  int checkpoint_every = 0;
};

int cmd_train(const TrainArgs& a) {
  if (a.model != "intrinsicnet" && a.model != "retinet-s1" && a.model != "retinet-s2")
    throw UsageError("--model must be intrinsicnet, retinet-s1 or retinet-s2, got '" +
                     a.model + "'");
  if (a.epochs < 0) throw UsageError("--epochs must be >= 0");
  if (a.model == "retinet-s2" && !a.gt_gradients && a.stage1_dir.empty())
    throw UsageError("retinet-s2 needs --stage1 <model dir> or --gt-gradients");
  const fs::path out = resolve_out_dir(a.out, "train");
  fs::create_directories(out);

  const std::vector<Sample> data = load_dataset(a.data);
  if (data.empty()) throw UsageError("dataset at '" + a.data + "' is empty");

  json user_cfg;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw IoError("cannot open --config " + a.config);
    try {
      f >> user_cfg;
    } catch (const json::exception& e) {
      throw IoError(std::string("bad --config JSON: ") + e.what());
    }
  }

  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch;
  opt.seed = a.seed;
  opt.momentum = a.momentum;
  opt.weight_decay = a.weight_decay;
  opt.augment = parse_on_off(a.augment, "--augment");
  opt.out_dir = out;
  opt.checkpoint_every = a.checkpoint_every;
  opt.schedule = LrSchedule{a.lr0, a.lr_end, 0, a.power};
  if (a.full_scale) {
    // full-scale preset; explicit lr flags still win
    if (!a.lr0_given) opt.schedule.lr0 = 1e-5;
    if (!a.lr_end_given) opt.schedule.lr_end = 1e-7;
    opt.max_shift = 20;
  }

  const bool use_imf = parse_on_off(a.imf, "--imf");
  Rng init_rng(derive_seed(a.seed, "init"));

  ModelBundle bundle;
  bundle.kind = a.model;
  TrainingLog log;

  if (a.model == "intrinsicnet" || a.model == "retinet-s1") {
    IntrinsicNetConfig cfg = a.full_scale ? full_scale_config() : IntrinsicNetConfig{};
    if (a.model == "retinet-s1") cfg.input_channels = 6;
    const bool user_dims = user_cfg.contains("intrinsicnet") &&
                           user_cfg["intrinsicnet"].contains("input_height");
    if (user_cfg.contains("intrinsicnet"))
      cfg = user_cfg.at("intrinsicnet").get<IntrinsicNetConfig>();
    if (!user_dims) {  // adopt the dataset extent when it fits the mirror
      if (data.front().image.height % (1 << cfg.depth()) == 0)
        cfg.input_height = data.front().image.height;
      if (data.front().image.width % (1 << cfg.depth()) == 0)
        cfg.input_width = data.front().image.width;
    }
    cfg.use_imf_loss = use_imf;
    bundle.inet_cfg = cfg;

    IntrinsicNet<float> net = IntrinsicNet<float>::build(cfg, init_rng);
    std::int64_t start_step = 0;
    if (!a.resume.empty()) {
      const Checkpoint ckpt = load_checkpoint(a.resume);
      model_restore<float>(net, ckpt);
      start_step = static_cast<std::int64_t>(ckpt.step);
    }
    opt.start_step = start_step;
    write_model_config(out, bundle);
    if (a.epochs == 0) {
      save_checkpoint(out / "checkpoint_final.ckpt",
                      model_snapshot<float>(net, static_cast<std::uint64_t>(start_step),
                                            std::to_string(a.seed)));
    } else if (a.model == "intrinsicnet") {
      log = train_intrinsic_net(net, data, opt);
    } else {
      log = train_retinet_stage1(net, data, opt);
    }
  } else if (a.model == "retinet-s2") {
    RetiNetConfig cfg;
    if (user_cfg.contains("retinet")) cfg = user_cfg.at("retinet").get<RetiNetConfig>();
    bundle.retinet_cfg = cfg;
    bundle.stage1_dir = a.stage1_dir;

    std::optional<IntrinsicNet<float>> stage1;
    if (!a.stage1_dir.empty()) {
      stage1 = load_intrinsic_model(a.stage1_dir);
      bundle.retinet_cfg.stage1 = stage1->cfg;
    }
    RetiNetStage2<float> net = RetiNetStage2<float>::build(bundle.retinet_cfg, init_rng);
    std::int64_t start_step = 0;
    if (!a.resume.empty()) {
      const Checkpoint ckpt = load_checkpoint(a.resume);
      model_restore<float>(net, ckpt);
      start_step = static_cast<std::int64_t>(ckpt.step);
    }
    opt.start_step = start_step;
    LossWeights weights = bundle.retinet_cfg.stage1.loss_weights;
    if (!use_imf) weights.gamma_imf = 0.0;
    write_model_config(out, bundle);
    if (a.epochs == 0) {
      save_checkpoint(out / "checkpoint_final.ckpt",
                      model_snapshot<float>(net, static_cast<std::uint64_t>(start_step),
                                            std::to_string(a.seed)));
    } else {
      log = train_retinet_stage2(net, stage1 ? &*stage1 : nullptr, a.gt_gradients, data, opt,
                                 weights);
    }
  }

  log.write(out / "train_log.txt");
  write_run_config(out, "train",
                   json{{"model", a.model},
                        {"data", a.data},
                        {"epochs", a.epochs},
                        {"batch", a.batch},
                        {"seed", a.seed},
                        {"imf", a.imf},
                        {"augment", a.augment},
                        {"lr0", opt.schedule.lr0},
                        {"lr_end", opt.schedule.lr_end},
                        {"power", opt.schedule.power},
                        {"momentum", a.momentum},
                        {"weight_decay", a.weight_decay},
                        {"gt_gradients", a.gt_gradients},
                        {"stage1_dir", a.stage1_dir},
                        {"full_scale", a.full_scale},
                        {"resume", a.resume}});
  if (!log.records.empty()) {
    const TrainRecord& last = log.records.back();
    std::printf("trained model=%s epochs=%d final_loss=%.6g\n", a.model.c_str(), a.epochs,
                last.loss_total);
  } else {
    std::printf("trained model=%s epochs=%d (initial checkpoint only)\n", a.model.c_str(),
                a.epochs);
  }
  return 0;
}

// --------------------------------------------------------------------------
// decompose
// --------------------------------------------------------------------------

struct DecomposeArgs {
  std::string model;
  std::string stage1_dir;
  bool retinex = false;
  std::vector<std::string> inputs;
  std::string out;
  double threshold = 0.075;
  bool chromaticity = false;
  double gamma = 2.2;
};

std::string output_stem(const fs::path& input) {
  std::string stem = input.stem().string();
  const std::string tail = "_image";
  if (stem.size() > tail.size() && stem.compare(stem.size() - tail.size(), tail.size(), tail) == 0)
    stem.resize(stem.size() - tail.size());
  return stem;
}

int cmd_decompose(const DecomposeArgs& a) {
  if (a.inputs.empty()) throw UsageError("decompose needs at least one --input image");
  if (!a.retinex && a.model.empty())
    throw UsageError("decompose needs --model <dir> or --retinex");
  if (a.retinex && !a.model.empty())
    throw UsageError("decompose takes either --model or --retinex, not both");
  const fs::path out = resolve_out_dir(a.out, "decompose");
  fs::create_directories(out);

  std::optional<IntrinsicNet<float>> inet;
  std::optional<IntrinsicNet<float>> stage1;
  std::optional<RetiNetStage2<float>> stage2;
  if (!a.retinex) {
    const ModelBundle b = read_model_config(a.model);
    if (b.kind == "intrinsicnet") {
      inet = load_intrinsic_model(a.model);
    } else if (b.kind == "retinet-s2") {
      const std::string s1_dir = !a.stage1_dir.empty() ? a.stage1_dir : b.stage1_dir;
      if (s1_dir.empty())
        throw UsageError("retinet-s2 model has no stage-1 reference; pass --stage1 <dir>");
      stage1 = load_intrinsic_model(s1_dir);
      RetiNetConfig cfg = b.retinet_cfg;
      cfg.stage1 = stage1->cfg;
      Rng rng(0);
      stage2 = RetiNetStage2<float>::build(cfg, rng);
      model_restore<float>(*stage2, load_checkpoint(find_checkpoint(a.model)));
    } else {
      throw UsageError("cannot decompose with a '" + b.kind + "' model; train retinet-s2 first");
    }
  }

  RetinexParams rp;
  rp.threshold = static_cast<float>(a.threshold);
  rp.use_chromaticity = a.chromaticity;

  for (const std::string& input : a.inputs) {
    const Image image = read_image(input);
    IntrinsicSet set;
    json meta;
    if (a.retinex) {
      RetinexResult res = retinex_decompose(image, rp);
      set = std::move(res.set);
      meta["solver_converged"] = res.solver_converged;
      meta["solver_iterations"] = res.solver_iterations;
    } else if (inet) {
      DecomposeResult res = decompose_intrinsic_net(*inet, image);
      set = std::move(res.set);
      meta["pad"] = {res.pad.top, res.pad.bottom, res.pad.left, res.pad.right};
    } else {
      DecomposeResult res = decompose_retinet(*stage1, *stage2, image);
      set = std::move(res.set);
      meta["pad"] = {res.pad.top, res.pad.bottom, res.pad.left, res.pad.right};
    }

    const std::string stem = output_stem(input);
    write_pfm(out / (stem + "_reflectance.pfm"), set.reflectance);
    write_pfm(out / (stem + "_shading.pfm"), set.shading);
    const float g = static_cast<float>(a.gamma);
    write_png(out / (stem + "_reflectance.png"), to_display(set.reflectance, g));
    write_png(out / (stem + "_shading.png"), to_display(set.shading, g));
    // Reconstruction preview: the decomposition should recompose the input.
    write_png(out / (stem + "_reconstruction.png"),
              to_display(compose_diffuse(set.reflectance, set.shading), g));
    meta["input"] = input;
    std::ofstream mf(out / (stem + "_decompose.json"));
    mf << meta.dump(2) << "\n";
    std::printf("decomposed %s -> %s_{reflectance,shading}.pfm\n", input.c_str(), stem.c_str());
  }

  write_run_config(out, "decompose",
                   json{{"model", a.model},
                        {"retinex", a.retinex},
                        {"threshold", a.threshold},
                        {"chromaticity", a.chromaticity},
                        {"gamma", a.gamma},
                        {"inputs", a.inputs}});
  return 0;
}

// --------------------------------------------------------------------------
// eval
// --------------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
  int k = 20;
  bool per_channel = false;
  double png_gamma = 2.2;
};

int cmd_eval(const EvalArgs& a) {
  const fs::path pred_dir = a.pred;
  if (!fs::is_directory(pred_dir)) throw IoError("--pred is not a directory: " + a.pred);

  std::vector<std::string> names;
  std::vector<IntrinsicSet> gts;
  std::vector<std::optional<Image>> masks;

  const fs::path gt_path = a.gt;
  if (fs::exists(gt_path / "manifest.json") || gt_path.filename() == "manifest.json") {
    const Manifest m = load_manifest(gt_path);
    const fs::path base = fs::is_directory(gt_path) ? gt_path : gt_path.parent_path();
    for (int i = 0; i < static_cast<int>(m.samples.size()); ++i) {
      Sample s = load_sample(m, base, i);
      names.push_back(fs::path(m.samples[i].image).stem().string());
      // strip the trailing "_image"
      names.back() = output_stem(m.samples[i].image);
      gts.push_back(std::move(s.set));
      masks.emplace_back();
    }
  } else {
    for (BenchmarkSample& b : load_benchmark(gt_path, static_cast<float>(a.png_gamma))) {
      names.push_back(b.name);
      gts.push_back(std::move(b.gt));
      masks.push_back(std::move(b.mask));
    }
  }
  if (names.empty()) throw IoError("no ground-truth items found at " + a.gt);

  std::vector<IntrinsicSet> preds;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const fs::path r = pred_dir / (names[i] + "_reflectance.pfm");
    const fs::path s = pred_dir / (names[i] + "_shading.pfm");
    if (!fs::exists(r) || !fs::exists(s)) {
      missing.push_back(names[i]);
      continue;
    }
    IntrinsicSet set;
    set.reflectance = read_pfm(r);
    set.shading = read_pfm(s);
    if (masks[i]) {
      for (int y = 0; y < set.reflectance.height; ++y)
        for (int x = 0; x < set.reflectance.width; ++x)
          if (masks[i]->at(y, x, 0) < 0.5f) {
            for (int c = 0; c < set.reflectance.channels; ++c) set.reflectance.at(y, x, c) = 0;
            for (int c = 0; c < set.shading.channels; ++c) set.shading.at(y, x, c) = 0;
          }
    }
    preds.push_back(std::move(set));
  }
  if (!missing.empty()) {
    std::fprintf(stderr, "eval: missing predictions for:\n");
    for (const std::string& m : missing) std::fprintf(stderr, "  %s\n", m.c_str());
    return 1;
  }

  WindowSpec spec{a.k};
  const MetricReport rep = evaluate_set(preds, gts, spec, a.per_channel, names);

  const fs::path csv = a.out.empty() ? pred_dir / "metrics.csv" : fs::path(a.out);
  write_metric_csv(csv, rep);
  write_run_config(csv.parent_path(), "eval",
                   json{{"pred", a.pred}, {"gt", a.gt}, {"k", a.k},
                        {"per_channel", a.per_channel}, {"csv", csv.string()}});

  std::printf("%-24s %10s %10s %10s %10s %10s %10s\n", "image", "mse_r", "mse_s", "lmse_r",
              "lmse_s", "dssim_r", "dssim_s");
  for (const MetricRow& r : rep.rows)
    std::printf("%-24s %10.6f %10.6f %10.6f %10.6f %10.6f %10.6f\n", r.name.c_str(), r.mse_r,
                r.mse_s, r.lmse_r, r.lmse_s, r.dssim_r, r.dssim_s);
  std::printf("%-24s %10.6f %10.6f %10.6f %10.6f %10.6f %10.6f\n", "MEAN", rep.mse_albedo,
              rep.mse_shading, rep.lmse_albedo, rep.lmse_shading, rep.dssim_albedo,
              rep.dssim_shading);
  std::printf("report: %s (images=%zu, lmse_mean=%.6f)\n", csv.string().c_str(),
              rep.image_count, rep.lmse_mean);
  return 0;
}

// --------------------------------------------------------------------------
// verify
// --------------------------------------------------------------------------

struct VerifyArgs {
  std::uint64_t seed = 1234;
  int trials = 20;
  std::string sabotage;
};

int cmd_verify(const VerifyArgs& a) {
  VerifyOptions opt;
  opt.seed = a.seed;
  opt.trials = a.trials;
  opt.sabotage = a.sabotage;
  const std::vector<CheckResult> results = run_verification(opt);
  bool all_pass = true;
  std::string first_fail;
  for (const CheckResult& r : results) {
    std::printf("[%s] %-22s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    if (!r.pass && all_pass) {
      all_pass = false;
      first_fail = r.name;
    }
  }
  if (!all_pass) {
    std::fprintf(stderr, "verification failed: %s\n", first_fail.c_str());
    return 3;
  }
  std::printf("all %zu checks passed\n", results.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intrinsic image decomposition toolkit"};
  app.require_subcommand(1);

  int threads = 1;
  bool verbose = false;
  app.add_option("--threads", threads,
                 "Upper bound for internal worker pools (kernels are currently sequential)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--verbose", verbose, "Print progress details");

  DatasetArgs da;
  auto* dataset = app.add_subcommand("dataset", "Generate a synthetic dataset");
  dataset->add_option("--n", da.n, "Sample count");
  dataset->add_option("--seed", da.seed, "Root seed");
  dataset->add_option("--out", da.out, "Output directory");
  dataset->add_option("--formation", da.formation, "diffuse|global_light|specular|full");
  dataset->add_option("--canvas", da.canvas, "HxW, e.g. 32x32");
  dataset->add_option("--min-shapes", da.min_shapes, "Minimum shapes per scene");
  dataset->add_option("--max-shapes", da.max_shapes, "Maximum shapes per scene");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--model", ta.model, "intrinsicnet|retinet-s1|retinet-s2");
  train->add_option("--data", ta.data, "Dataset directory or manifest.json")->required();
  train->add_option("--out", ta.out, "Output directory");
  train->add_option("--config", ta.config, "JSON network config (flags override)");
  train->add_option("--epochs", ta.epochs, "Epoch count");
  train->add_option("--batch", ta.batch, "Batch size");
  train->add_option("--seed", ta.seed, "Root seed");
  train->add_option("--imf", ta.imf, "Image formation loss on|off");
  train->add_option("--augment", ta.augment, "Flip/shift augmentation on|off");
  train->add_option("--lr0", ta.lr0, "Initial learning rate");
  train->add_option("--lr-end", ta.lr_end, "Final learning rate");
  train->add_option("--power", ta.power, "Polynomial decay power");
  train->add_option("--momentum", ta.momentum, "SGD momentum");
  train->add_option("--weight-decay", ta.weight_decay, "L2 weight decay");
  train->add_option("--stage1", ta.stage1_dir, "Stage-1 model dir (retinet-s2)");
  train->add_flag("--gt-gradients", ta.gt_gradients,
                  "Train stage 2 on ground-truth gradients");
  train->add_option("--resume", ta.resume, "Checkpoint to resume from");
  train->add_flag("--full-scale", ta.full_scale,
                  "VGG16-like widths and full-scale optimizer defaults");
  train->add_option("--checkpoint-every", ta.checkpoint_every,
                    "Write periodic checkpoints every N epochs");

  DecomposeArgs ca;
  auto* dec = app.add_subcommand("decompose", "Decompose images into intrinsics");
  dec->add_option("--model", ca.model, "Trained model directory");
  dec->add_option("--stage1", ca.stage1_dir, "Override stage-1 model dir");
  dec->add_flag("--retinex", ca.retinex, "Use the classical baseline");
  dec->add_option("--input", ca.inputs, "Input image(s), .pfm or .png")->required();
  dec->add_option("--out", ca.out, "Output directory");
  dec->add_option("--threshold", ca.threshold, "Retinex gradient threshold");
  dec->add_flag("--chromaticity", ca.chromaticity, "Classify on chromaticity gradients");
  dec->add_option("--gamma", ca.gamma, "Preview gamma");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--pred", ea.pred, "Prediction directory")->required();
  ev->add_option("--gt", ea.gt, "Manifest directory or benchmark directory")->required();
  ev->add_option("--out", ea.out, "CSV report path");
  ev->add_option("--k", ea.k, "LMSE window size");
  ev->add_flag("--per-channel", ea.per_channel, "LMSE per channel instead of joint");
  ev->add_option("--png-gamma", ea.png_gamma,
                 "Inverse gamma applied to 8-bit benchmark inputs (0 = already linear)");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Run gradient checks and invariants");
  ver->add_option("--seed", va.seed, "Root seed");
  ver->add_option("--trials", va.trials, "Trials per op");
  ver->add_option("--sabotage", va.sabotage,
                  "Perturb the named op's backward (negative control)");

  try {
    app.parse(argc, argv);
    ta.lr0_given = train->count("--lr0") > 0;
    ta.lr_end_given = train->count("--lr-end") > 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (verbose)
      std::fprintf(stderr, "intrinsic: threads=%d subcommand=%s\n", threads,
                   app.get_subcommands().front()->get_name().c_str());
    if (app.got_subcommand(dataset)) return cmd_dataset(da);
    if (app.got_subcommand(train)) return cmd_train(ta);
    if (app.got_subcommand(dec)) return cmd_decompose(ca);
    if (app.got_subcommand(ev)) return cmd_eval(ea);
    if (app.got_subcommand(ver)) return cmd_verify(va);
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
