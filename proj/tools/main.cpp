// transrppg command-line entry point: synthetic data generation, MSTmap
// construction, training, evaluation, the leave-one-subject-out protocol,
// ablation sweeps and diagnostics.

#include "transrppg/config.hpp"
#include "transrppg/evaluator.hpp"
#include "transrppg/gradcheck.hpp"
#include "transrppg/model.hpp"
#include "transrppg/mstmap.hpp"
#include "transrppg/synth.hpp"
#include "transrppg/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace transrppg;

namespace {

RunConfig load_config(const std::string& config_path, std::optional<uint64_t> seed_override) {
  RunConfig rc = config_path.empty() ? RunConfig{} : parse_run_config_file(config_path);
  if (seed_override) {
    rc.seed = *seed_override;
    rc.synth.seed = *seed_override;
    rc.train.seed = *seed_override;
  }
  return rc;
}

struct LoadedData {
  std::vector<RegionTraceSet> traces;
  std::vector<EvalSample> samples;
  size_t target_frames = 0;
};

// Resamples every sample to 30 fps on a grid matching the first sample's
// duration; model geometry then follows from the data.
LoadedData load_manifest_data(const std::string& manifest_path, ColorSpace cs) {
  LoadedData d;
  for (const auto& e : read_manifest(manifest_path)) {
    RegionTraceSet t = read_trace_file(e.path);
    if (t.subject_id != e.subject || t.label != e.label)
      throw std::runtime_error("manifest disagrees with trace header for " + e.path);
    d.traces.push_back(std::move(t));
  }
  if (d.traces.empty()) throw std::runtime_error("manifest lists no samples");
  const auto& first = d.traces.front();
  d.target_frames =
      static_cast<size_t>(std::llround(static_cast<double>(first.frames) * 30.0 / first.fps));
  for (const auto& t : d.traces)
    d.samples.push_back(prepare_sample(t, cs, 30.0, d.target_frames));
  return d;
}

ModelConfig model_for_data(const RunConfig& rc, const LoadedData& d) {
  ModelConfig cfg = rc.model;
  const auto& first = d.traces.front();
  apply_data_geometry(cfg, first.face.regions, first.bg.regions, d.target_frames,
                      rc.eval.color_space);
  if (rc.eval.bg_only) {
    cfg.H_face = cfg.H_bg;
    cfg.use_bg_branch = false;
  }
  cfg.validate();
  return cfg;
}

void write_fold_report(const LosoResult& res, const std::string& out_dir) {
  {
    std::ofstream os(out_dir + "/metrics.txt", std::ios::binary);
    os << format_metrics_line(res.pooled) << "\n";
  }
  {
    std::ofstream os(out_dir + "/folds.txt", std::ios::binary);
    for (const auto& f : res.folds) {
      os << "subject=" << f.subject << " ";
      if (f.metrics_available) os << format_metrics_line(f.metrics) << "\n";
      else os << "metrics=na (single-class fold)\n";
    }
  }
  {
    std::ofstream os(out_dir + "/scores.txt", std::ios::binary);
    char buf[64];
    for (size_t i = 0; i < res.pooled_scores.scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.6f", res.pooled_scores.scores[i]);
      os << res.pooled_scores.subjects[i] << " " << buf << " "
         << res.pooled_scores.labels[i] << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TransRPPG: rPPG transformer for 3D mask presentation attack detection"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_path, ckpt_path, trace_path, resume_path;
  std::optional<uint64_t> seed;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file");
    cmd->add_option("--seed", seed, "override the config seed");
  };

  auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic trace dataset");
  add_common(cmd_gen);
  cmd_gen->add_option("--out", out_dir, "output directory")->required();

  auto* cmd_mstmap = app.add_subcommand("mstmap", "build MSTmaps from one trace file");
  std::string space = "RGB";
  bool image = false;
  cmd_mstmap->add_option("trace", trace_path, "trace file")->required();
  cmd_mstmap->add_option("--out", out_dir, "output directory")->required();
  cmd_mstmap->add_option("--space", space, "color space: RGB G YUV CHROM POS");
  cmd_mstmap->add_flag("--image", image, "also write PGM/PPM images");

  auto* cmd_train = app.add_subcommand("train", "train on every sample in a manifest");
  add_common(cmd_train);
  cmd_train->add_option("--data", data_path, "manifest file")->required();
  cmd_train->add_option("--out", out_dir, "output directory")->required();
  cmd_train->add_option("--resume", resume_path, "resume from a training checkpoint");

  auto* cmd_eval = app.add_subcommand("eval", "score a manifest against a checkpoint");
  add_common(cmd_eval);
  std::optional<double> hter_threshold;
  cmd_eval->add_option("--data", data_path, "manifest file")->required();
  cmd_eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  cmd_eval->add_option("--out", out_dir, "output directory")->required();
  cmd_eval->add_option("--threshold", hter_threshold, "fixed threshold for HTER");

  auto* cmd_loso = app.add_subcommand("loso", "leave-one-subject-out protocol");
  add_common(cmd_loso);
  cmd_loso->add_option("--data", data_path, "manifest file")->required();
  cmd_loso->add_option("--out", out_dir, "output directory")->required();

  auto* cmd_ablate = app.add_subcommand("ablate", "ablation sweep over one axis");
  add_common(cmd_ablate);
  std::string axis_name, values_csv;
  cmd_ablate->add_option("--data", data_path, "manifest file")->required();
  cmd_ablate->add_option("--axis", axis_name, "axis name")->required();
  cmd_ablate->add_option("--values", values_csv, "comma-separated axis values")->required();
  cmd_ablate->add_option("--out", out_dir, "output directory")->required();

  auto* cmd_attn = app.add_subcommand("attn", "export fusion-layer attention maps");
  add_common(cmd_attn);
  cmd_attn->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  cmd_attn->add_option("--trace", trace_path, "trace file")->required();
  cmd_attn->add_option("--out", out_dir, "output directory")->required();

  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(cmd_gradcheck);

  auto* cmd_params = app.add_subcommand("params", "print the parameter budget breakdown");
  add_common(cmd_params);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      fs::create_directories(out_dir);
      auto data = generate_dataset(rc.synth);
      auto paths = write_dataset(data, out_dir);
      std::cout << "wrote " << paths.size() << " trace files and manifest to " << out_dir << "\n";
    } else if (cmd_mstmap->parsed()) {
      ColorSpace cs = parse_color_space(space);
      fs::create_directories(out_dir);
      RegionTraceSet t = read_trace_file(trace_path);
      const size_t target =
          static_cast<size_t>(std::llround(static_cast<double>(t.frames) * 30.0 / t.fps));
      RegionTraceSet r = resample_traces(t, 30.0, target);
      auto [face, bg] = build_mstmaps(r);
      MSTMap face_n = normalize_rows(color_transform(face, cs));
      write_mstmap_binary(face_n, out_dir + "/face.mstm");
      if (image) write_map_image(face_n, out_dir + (face_n.C == 1 ? "/face.pgm" : "/face.ppm"));
      if (bg.rows > 0) {
        MSTMap bg_n = normalize_rows(color_transform(bg, cs));
        write_mstmap_binary(bg_n, out_dir + "/bg.mstm");
        if (image) write_map_image(bg_n, out_dir + (bg_n.C == 1 ? "/bg.pgm" : "/bg.ppm"));
      }
      std::cout << "wrote maps (" << face_n.rows << "x" << face_n.T << "x" << face_n.C
                << ") to " << out_dir << "\n";
    } else if (cmd_train->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      fs::create_directories(out_dir);
      LoadedData d = load_manifest_data(data_path, rc.eval.color_space);
      ModelConfig cfg = model_for_data(rc, d);
      auto samples = to_train_samples<float>(d.samples, cfg, rc.eval.bg_only);
      ModelWeights<float> w = ModelWeights<float>::make(cfg);
      AdamState<float> state = AdamState<float>::make(w);
      size_t start_epoch = 1;
      if (!resume_path.empty()) {
        start_epoch = load_train_checkpoint(w, state, resume_path) + 1;
      } else {
        w.init(rc.train.seed);
      }
      TrainLog log = train(w, samples, rc.train, state, start_epoch);
      save_train_checkpoint(w, state, rc.train.max_epochs, out_dir + "/checkpoint.trpg");
      write_train_log(log, out_dir + "/trainlog.txt");
      std::cout << "trained " << log.size() << " epochs; checkpoint in " << out_dir << "\n";
    } else if (cmd_eval->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      fs::create_directories(out_dir);
      LoadedData d = load_manifest_data(data_path, rc.eval.color_space);
      ModelConfig cfg = model_for_data(rc, d);
      auto samples = to_train_samples<float>(d.samples, cfg, rc.eval.bg_only);
      ModelWeights<float> w = ModelWeights<float>::make(cfg);
      load_checkpoint(w, ckpt_path);
      ScoredSet scored;
      for (auto& s : samples) {
        scored.scores.push_back(score_sample(s, w));
        scored.labels.push_back(s.label);
        scored.subjects.push_back(s.subject);
      }
      MetricsReport rep =
          compute_metrics(scored, hter_threshold ? &*hter_threshold : nullptr);
      {
        std::ofstream os(out_dir + "/metrics.txt", std::ios::binary);
        os << format_metrics_line(rep) << "\n";
      }
      std::cout << format_metrics_line(rep) << "\n";
    } else if (cmd_loso->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      fs::create_directories(out_dir);
      LoadedData d = load_manifest_data(data_path, rc.eval.color_space);
      ModelConfig cfg = model_for_data(rc, d);
      LosoOptions opts;
      opts.bg_maps_as_input = rc.eval.bg_only;
      LosoResult res = loso_run<float>(d.samples, cfg, rc.train, opts);
      write_fold_report(res, out_dir);
      std::cout << format_metrics_line(res.pooled) << "\n";
    } else if (cmd_ablate->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      fs::create_directories(out_dir);
      LoadedData d = load_manifest_data(data_path, rc.eval.color_space);
      ModelConfig cfg = model_for_data(rc, d);
      std::vector<std::string> values;
      std::stringstream ss(values_csv);
      std::string v;
      while (std::getline(ss, v, ',')) values.push_back(v);
      auto rows = ablation_sweep(parse_ablation_axis(axis_name), values, d.traces, cfg, rc.train);
      write_ablation_csv(rows, out_dir + "/ablation.csv");
      write_ablation_csv(rows, std::cout);
    } else if (cmd_attn->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      fs::create_directories(out_dir);
      RegionTraceSet t = read_trace_file(trace_path);
      const size_t target =
          static_cast<size_t>(std::llround(static_cast<double>(t.frames) * 30.0 / t.fps));
      EvalSample s = prepare_sample(t, rc.eval.color_space, 30.0, target);
      ModelConfig cfg = rc.model;
      apply_data_geometry(cfg, t.face.regions, t.bg.regions, target, rc.eval.color_space);
      cfg.validate();
      ModelWeights<float> w = ModelWeights<float>::make(cfg);
      load_checkpoint(w, ckpt_path);
      ForwardResult<float> res = forward(s.face, s.bg, w, true);
      auto files = export_attention(res.attn, cfg, out_dir + "/attention");
      std::cout << "liveness=" << liveness_score(res) << "; wrote " << files.size()
                << " attention files to " << out_dir << "\n";
    } else if (cmd_gradcheck->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      auto results = gradcheck_suite(rc.seed);
      double worst = 0.0;
      std::string worst_name;
      for (const auto& r : results) {
        if (r.err > worst) {
          worst = r.err;
          worst_name = r.name;
        }
      }
      const bool ok = worst < 1e-4;
      std::printf("%zu checks, worst rel err %.3e (%s): %s\n", results.size(), worst,
                  worst_name.c_str(), ok ? "PASS" : "FAIL");
      return ok ? 0 : 1;
    } else if (cmd_params->parsed()) {
      RunConfig rc = load_config(config_path, seed);
      ModelConfig cfg = rc.model;
      apply_data_geometry(cfg, rc.synth.face_regions, rc.synth.bg_regions,
                          static_cast<size_t>(std::llround(rc.synth.duration_s * 30.0)),
                          rc.eval.color_space);
      cfg.validate();
      ModelWeights<float> w = ModelWeights<float>::make(cfg);
      ParamCount pc = param_count(w);
      for (const auto& g : pc.groups)
        std::printf("%-24s %8zu\n", g.name.c_str(), g.count);
      std::printf("patch_embed              %8zu\n", pc.patch_embed);
      std::printf("transformer_layers       %8zu\n", pc.transformer_layers);
      std::printf("core (patch+layers)      %8zu\n", pc.core());
      std::printf("class_tokens             %8zu\n", pc.class_tokens);
      std::printf("heads                    %8zu\n", pc.heads);
      std::printf("total_excl_pos_embed     %8zu\n", pc.total_excl_pos());
      std::printf("pos_embed                %8zu\n", pc.pos_embed);
      std::printf("total                    %8zu\n", pc.total());
      std::printf("flops_forward            %.0f\n", flop_count(cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
