// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "floc/cam.hpp"
#include "floc/cgsr.hpp"
#include "floc/checkpoint.hpp"
#include "floc/config.hpp"
#include "floc/data.hpp"
#include "floc/eval.hpp"
#include "floc/png_io.hpp"
#include "floc/train.hpp"

namespace floc::cli {

namespace fs = std::filesystem;

namespace {

// Flags shared by every subcommand that builds a RunConfig. Unset flags
// leave the file (or default) value alone.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string scales;
  std::string refiner;
  std::string remote_url;
  std::string prompt_mode;
  std::optional<double> rho;
  std::optional<double> tolerance;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  std::optional<std::size_t> cabl_depth;
  std::string cabl_structure;
  std::string edge_operator;

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : config_parse(config);
    if (seed) c.seed = *seed;
    if (!scales.empty()) c.scales = parse_scales(scales);
    if (!refiner.empty()) c.refiner = parse_refiner_kind(refiner);
    if (!remote_url.empty()) c.remote_url = remote_url;
    if (!prompt_mode.empty()) c.prompt_mode = parse_prompt_mode(prompt_mode);
    if (rho) c.rho = *rho;
    if (tolerance) c.region_tolerance = *tolerance;
    if (epochs) c.epochs = *epochs;
    if (batch) c.batch = *batch;
    if (lr) c.lr = *lr;
    if (cabl_depth) c.model.cabl_depth = *cabl_depth;
    if (!cabl_structure.empty()) c.model.cabl_structure = parse_cabl_structure(cabl_structure);
    if (!edge_operator.empty()) c.model.edge_operator = parse_edge_operator(edge_operator);
    c.validate();
    return c;
  }
};

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Random seed");
}

void add_pipeline_flags(CLI::App* app, Overrides& o) {
  app->add_option("--scales", o.scales, "Comma-separated CAM scales, ascending");
  app->add_option("--refiner", o.refiner, "Mask refiner")->check(CLI::IsMember({"none", "region", "remote"}));
  app->add_option("--remote-url", o.remote_url, "Segmentation service base URL");
  app->add_option("--prompt-mode", o.prompt_mode, "Prompt mode")
      ->check(CLI::IsMember({"null", "point", "box", "box+point"}));
  app->add_option("--rho", o.rho, "Coarse-mask threshold in (0,1)");
  app->add_option("--tolerance", o.tolerance, "Region-grow colour tolerance");
}

void add_train_flags(CLI::App* app, Overrides& o) {
  app->add_option("--epochs", o.epochs, "Training epochs");
  app->add_option("--batch", o.batch, "Batch size");
  app->add_option("--lr", o.lr, "Learning rate");
  app->add_option("--cabl-depth", o.cabl_depth, "Number of leading blocks with edge fusion");
  app->add_option("--cabl-structure", o.cabl_structure, "Edge fusion form")->check(CLI::IsMember({"I", "II", "III"}));
  app->add_option("--edge-operator", o.edge_operator, "Edge operator")->check(CLI::IsMember({"sobel", "prewitt"}));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

Model<float> train_model(const RunConfig& cfg, const fs::path& data_dir, std::ostream& err,
                         std::string* log_csv = nullptr) {
  const auto data = dataset_load(data_dir, LoadMode::train);
  Model<float> model(cfg.model, cfg.seed);
  if (log_csv) *log_csv = "epoch,loss,accuracy\n";
  fit(model, data, cfg.fit_options(), [&](std::size_t e, const EpochStats& s) {
    err << "epoch " << e + 1 << "/" << cfg.epochs << "  loss " << s.mean_loss << "  acc " << s.accuracy << '\n';
    if (log_csv) *log_csv += std::to_string(e + 1) + "," + std::to_string(s.mean_loss) + "," +
                             std::to_string(s.accuracy) + "\n";
  });
  return model;
}

void write_localization(const fs::path& out, const std::string& name, const Localization& loc,
                        std::span<const std::size_t> scales) {
  const fs::path stem = fs::path(name).stem();
  write_camf(out / "cam" / (stem.string() + ".camf"), loc.cam, scales);
  write_mask_png(out / "masks" / (stem.string() + ".png"), loc.prediction);
}

void prepare_out(const fs::path& out) {
  fs::create_directories(out / "cam");
  fs::create_directories(out / "masks");
}

void emit_all(const EvalReport& report, const fs::path& out, bool svg) {
  emit_report(report, ReportFormat::json, out / "report.json");
  emit_report(report, ReportFormat::csv, out / "report.csv");
  if (svg) emit_report(report, ReportFormat::svg, out / "curves.svg");
}

std::vector<fs::path> input_images(const fs::path& input) {
  if (fs::is_regular_file(input)) return {input};
  if (!fs::is_directory(input)) throw IoError("input not found: " + input.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(input))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .png files in " + input.string());
  return out;
}

void check_unique_names(std::span<const ManipSample> data) {
  std::set<std::string> stems;
  for (const auto& s : data)
    if (!stems.insert(fs::path(s.name).stem().string()).second)
      throw IoError("duplicate image name across classes: " + s.name);
}

struct AblationVariant {
  std::string name;
  RunConfig config;
};

std::vector<AblationVariant> ablation_variants(const std::string& kind, const RunConfig& base) {
  std::vector<AblationVariant> v;
  auto with = [&](std::string name, auto edit) {
    RunConfig c = base;
    edit(c.model);
    v.push_back({std::move(name), c});
  };
  if (kind == "cabl") {
    with("without_cabl", [](ModelConfig& m) { m.cabl_depth = 0; });
    with("with_cabl", [](ModelConfig& m) { m.cabl_depth = m.num_blocks; });
  } else if (kind == "depth") {
    const std::size_t n = base.model.num_blocks;
    for (std::size_t d : {n / 3, 2 * n / 3, n})
      with("depth_" + std::to_string(d), [d](ModelConfig& m) { m.cabl_depth = d; });
  } else if (kind == "operator") {
    for (auto op : {EdgeOperator::sobel, EdgeOperator::prewitt})
      with(std::string(to_string(op)), [op](ModelConfig& m) { m.edge_operator = op; });
  }
  return v;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised image manipulation localization", "floc"};
  app.require_subcommand(1);
  Overrides o;
  std::string out_dir, data_dir, val_dir, model_path, input_path, paste = "donor", kind, levels;
  std::size_t count = 400, size = 64;
  int boundary_blur = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic forgery dataset");
  synth->add_option("--out", out_dir, "Dataset root")->required();
  synth->add_option("--count", count, "Number of images (even)");
  synth->add_option("--size", size, "Image side in pixels");
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_option("--paste", paste, "Spliced content")->check(CLI::IsMember({"donor", "uniform"}));
  synth->add_option("--boundary-blur", boundary_blur, "Gaussian kernel on the splice boundary (0 = hard)");

  auto* train = app.add_subcommand("train", "Train on image-level labels");
  train->add_option("--data", data_dir, "Dataset root")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  add_config_flags(train, o);
  add_train_flags(train, o);

  auto* infer = app.add_subcommand("infer", "Localize manipulations in images");
  infer->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", input_path, "PNG file or directory")->required();
  infer->add_option("--out", out_dir, "Output directory")->required();
  add_config_flags(infer, o);
  add_pipeline_flags(infer, o);

  auto* eval = app.add_subcommand("eval", "Evaluate detection and localization");
  eval->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "Dataset root with masks/")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  add_config_flags(eval, o);
  add_pipeline_flags(eval, o);

  auto* ablate = app.add_subcommand("ablate", "Component ablations");
  ablate->add_option("kind", kind, "cabl | depth | operator | prompt")
      ->required()
      ->check(CLI::IsMember({"cabl", "depth", "operator", "prompt"}));
  ablate->add_option("--data", data_dir, "Evaluation dataset (prompt) or training dataset")->required();
  ablate->add_option("--val", val_dir, "Evaluation dataset for cabl/depth/operator");
  ablate->add_option("--model", model_path, "Checkpoint (prompt only)");
  ablate->add_option("--out", out_dir, "Output directory")->required();
  add_config_flags(ablate, o);
  add_pipeline_flags(ablate, o);
  add_train_flags(ablate, o);

  auto* robust = app.add_subcommand("robustness", "Localization under degradation");
  robust->add_option("kind", kind, "jpeg | blur")->required()->check(CLI::IsMember({"jpeg", "blur"}));
  robust->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  robust->add_option("--data", data_dir, "Dataset root with masks/")->required();
  robust->add_option("--levels", levels, "Comma-separated levels (default: six standard levels)");
  robust->add_option("--out", out_dir, "Output directory")->required();
  add_config_flags(robust, o);
  add_pipeline_flags(robust, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    const fs::path out_root = out_dir;
    if (synth->parsed()) {
      SynthOptions so;
      so.count = count;
      so.size = size;
      so.seed = o.seed.value_or(0);
      so.paste = paste == "uniform" ? PasteMode::uniform : PasteMode::donor;
      so.boundary_blur = boundary_blur;
      synth_forgery_generate(out_root, so);
      out << "wrote " << count << " images to " << out_root.string() << '\n';
      return kExitOk;
    }

    const RunConfig cfg = o.resolve();
    fs::create_directories(out_root);

    if (train->parsed()) {
      std::string log;
      const auto model = train_model(cfg, data_dir, err, &log);
      save_checkpoint(out_root / "model.ckpt", model);
      write_text(out_root / "config.json", cfg.to_json() + "\n");
      write_text(out_root / "train_log.csv", log);
      out << "saved " << (out_root / "model.ckpt").string() << '\n';
      return kExitOk;
    }

    const PipelineOptions po = cfg.pipeline_options();

    if (infer->parsed()) {
      const Model<float> model = load_checkpoint(model_path).frozen();
      prepare_out(out_root);
      std::string csv = "name,score,detected\n";
      for (const auto& path : input_images(input_path)) {
        const Image img = read_png(path);
        const Localization loc = localize(model, img, po);
        const std::string name = path.filename().string();
        write_localization(out_root, name, loc, po.scales);
        if (loc.refined.fallback && !loc.refined.error.empty()) err << name << ": " << loc.refined.error << '\n';
        csv += name + "," + std::to_string(loc.score) + "," + (loc.score >= po.detection_threshold ? "1" : "0") +
               "\n";
      }
      write_text(out_root / "scores.csv", csv);
      out << "wrote " << out_root.string() << '\n';
      return kExitOk;
    }

    if (eval->parsed()) {
      const auto data = dataset_load(data_dir, LoadMode::eval);
      check_unique_names(data);
      const Model<float> model = load_checkpoint(model_path);
      const auto ev = evaluate_dataset(model, data, po, fs::path(data_dir).filename().string(), true);
      prepare_out(out_root);
      for (const auto& r : ev.images) write_localization(out_root, r.name, r.loc, po.scales);
      EvalReport report;
      report.datasets.push_back(ev.scores);
      emit_all(report, out_root, false);
      out << "i_auc " << (ev.scores.i_auc ? std::to_string(*ev.scores.i_auc) : std::string("n/a")) << "  p_f1 "
          << ev.scores.p_f1 << '\n';
      return kExitOk;
    }

    if (ablate->parsed()) {
      const auto data = dataset_load(data_dir, LoadMode::eval);
      EvalReport report;
      if (kind == "prompt") {
        if (model_path.empty()) throw CLI::RequiredError("--model");
        report.ablations.push_back(ablate_prompt_modes(load_checkpoint(model_path), data, po));
      } else {
        if (val_dir.empty()) throw CLI::RequiredError("--val");
        const auto val = dataset_load(val_dir, LoadMode::eval);
        AblationTable table{kind, {}};
        for (const auto& v : ablation_variants(kind, cfg)) {
          err << "variant " << v.name << '\n';
          const auto model = train_model(v.config, data_dir, err);
          const auto s = evaluate_dataset(model, val, po, v.name).scores;
          table.rows.push_back({v.name, s.i_auc, s.p_f1, s.p_f1_manipulated});
        }
        report.ablations.push_back(std::move(table));
      }
      emit_all(report, out_root, false);
      for (const auto& r : report.ablations.front().rows) out << r.variant << "  p_f1 " << r.p_f1 << '\n';
      return kExitOk;
    }

    if (robust->parsed()) {
      const Degradation d = parse_degradation(kind);
      std::vector<int> lv;
      if (levels.empty()) {
        lv = default_levels(d);
      } else {
        for (auto s : parse_scales(levels)) lv.push_back(static_cast<int>(s));
      }
      const auto data = dataset_load(data_dir, LoadMode::eval);
      EvalReport report;
      report.curves.push_back({kind, robustness_sweep(load_checkpoint(model_path), data, d, lv, po)});
      emit_all(report, out_root, true);
      for (const auto& p : report.curves.front().points) out << kind << ' ' << p.level << "  p_f1 " << p.p_f1 << '\n';
      return kExitOk;
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace floc::cli
