// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// stgnet: dataset generation, two-stage training, evaluation, report
// assembly, and gradient checking behind one executable.
//
// Settings resolve as preset defaults < config file < STGNET_* environment
// < flags; the resolved table rides along in every artifact. Exit codes:
// 0 success, 2 config or input error, 3 numerical failure, 4 internal
// invariant violation.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stg/eval.hpp"
#include "stg/grad_check.hpp"
#include "stg/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// The only place a wall clock is read: timestamps live in this sidecar and
// nowhere else, so every other artifact is byte-identical across reruns.
void write_meta_sidecar(const fs::path& dir) {
  char buf[64];
  const std::time_t now = std::time(nullptr);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  stg::detail_dataset::write_text_file(dir / "run.meta",
                                       std::string("written_at: ") + buf + "\n");
}

std::string with_provenance_header(const ordered_json& provenance,
                                   const std::string& body) {
  return "# " + provenance.dump() + "\n" + body;
}

void print_epoch(const stg::EpochMetrics& em) {
  std::printf("stage %d epoch %3d  lr %-8.3g  train_loss %-10.6g  val %.4f\n",
              em.stage, em.epoch, em.lr, em.train_loss, em.val_metric);
}

int cmd_generate(const stg::RunConfig& rc, const std::vector<std::string>& argv) {
  const auto n = rc.u64("scene.scenes");
  STG_CONFIG_CHECK(n > 0, "scene.scenes must be positive");
  const auto scfg = stg::scene_config(rc);
  stg::Dataset ds = stg::generate_dataset(
      scfg, rc.seed(), static_cast<std::size_t>(n),
      static_cast<std::size_t>(rc.u64("scene.qa_per_scene")));
  stg::render_features(ds);
  const fs::path dir = rc.dataset_dir();
  stg::write_dataset(ds, dir, stg::provenance_json(rc, argv, ds.hash_hex));
  write_meta_sidecar(dir);
  std::printf("wrote %zu scenes, %zu qa items to %s (hash %s)\n",
              ds.scenes.size(), ds.items.size(), dir.string().c_str(),
              ds.hash_hex.c_str());
  return 0;
}

int cmd_train(const stg::RunConfig& rc, const std::vector<std::string>& argv,
              const std::map<std::string, std::string>& flags,
              const std::string& stage, const std::string& init_path,
              const std::string& resume_path, bool from_scratch) {
  stg::Dataset ds = stg::load_dataset(rc.dataset_dir());
  stg::TrainConfig tcfg = stg::train_config(rc);
  const stg::ModelConfig mcfg = stg::model_config(rc, ds);
  const fs::path ckdir = rc.checkpoint_dir();
  fs::create_directories(ckdir);
  const auto prov = stg::provenance_json(rc, argv, ds.hash_hex);

  std::vector<stg::EpochMetrics> metrics;
  double best_val = -1.0;
  stg::TrainHooks hooks;
  hooks.on_epoch = [&](const stg::EpochMetrics& em) {
    metrics.push_back(em);
    print_epoch(em);
  };
  hooks.on_checkpoint = [&](stg::ModelParams& p, const stg::Adam& adam,
                            int next_epoch, const stg::EpochMetrics& em) {
    stg::save_checkpoint((ckdir / "last.ckpt").string(), p, adam, tcfg, 2,
                         next_epoch, ds.hash_hex, prov);
    if (em.val_metric > best_val) {
      best_val = em.val_metric;
      stg::save_checkpoint((ckdir / "best.ckpt").string(), p, adam, tcfg, 2,
                           next_epoch, ds.hash_hex, prov);
    }
  };

  const bool resuming = !resume_path.empty();
  if (resuming) {
    // Continue an interrupted stage-2 run. The checkpoint's configuration is
    // authoritative so the resumed trace matches the uninterrupted one; an
    // explicit --epochs flag may move the stopping point.
    auto ck = stg::load_checkpoint(resume_path);
    STG_CONFIG_CHECK(ck.stage == 2,
                     "--resume wants a stage-2 checkpoint; use --init to start "
                     "stage 2 from a stage-1 checkpoint");
    STG_CONFIG_CHECK(ck.dataset_hash == ds.hash_hex,
                     "checkpoint was trained on a different dataset (hash " +
                         ck.dataset_hash + " vs " + ds.hash_hex + ")");
    tcfg = ck.train_config;
    if (flags.count("train.stage2_epochs"))
      tcfg.stage2_epochs = static_cast<int>(rc.integer("train.stage2_epochs"));
    auto res = stg::train_stage2(ds, ck.params, ck.adam, tcfg, ck.next_epoch, hooks);
    std::printf("resumed at epoch %d; best val %.4f (epoch %d)\n", ck.next_epoch,
                res.best_val, res.best_epoch);
  } else if (stage == "1") {
    STG_CONFIG_CHECK(mcfg.use_sg,
                     "stage 1 trains the matching head; pick an ablation row "
                     "with spatial grounding");
    stg::ModelParams p = stg::init_params(mcfg, tcfg.seed);
    auto m1 = stg::train_stage1(ds, p, tcfg, hooks);
    stg::Adam adam;
    adam.init(p);
    stg::save_checkpoint((ckdir / "stage1.ckpt").string(), p, adam, tcfg, 1,
                         tcfg.stage1_epochs, ds.hash_hex, prov);
  } else if (stage == "2") {
    stg::ModelParams p;
    stg::Adam adam;
    if (!init_path.empty()) {
      auto ck = stg::load_checkpoint(init_path);
      STG_CONFIG_CHECK(ck.dataset_hash == ds.hash_hex,
                       "checkpoint was trained on a different dataset (hash " +
                           ck.dataset_hash + " vs " + ds.hash_hex + ")");
      p = ck.params;
      adam.init(p);
    } else if (from_scratch) {
      p = stg::init_params(mcfg, tcfg.seed);
      adam.init(p);
    } else {
      throw stg::ConfigError(
          "stage 2 needs --init <stage-1 checkpoint>, --resume <checkpoint>, "
          "or --from-scratch");
    }
    auto res = stg::train_stage2(ds, p, adam, tcfg, 0, hooks);
    std::printf("best val %.4f (epoch %d)\n", res.best_val, res.best_epoch);
  } else {  // both stages
    stg::ModelParams p = stg::init_params(mcfg, tcfg.seed);
    if (mcfg.use_sg && tcfg.stage1_epochs > 0) {
      stg::train_stage1(ds, p, tcfg, hooks);
      stg::Adam a0;
      a0.init(p);
      stg::save_checkpoint((ckdir / "stage1.ckpt").string(), p, a0, tcfg, 1,
                           tcfg.stage1_epochs, ds.hash_hex, prov);
    }
    stg::Adam adam;
    adam.init(p);
    auto res = stg::train_stage2(ds, p, adam, tcfg, 0, hooks);
    std::printf("best val %.4f (epoch %d)\n", res.best_val, res.best_epoch);
  }

  stg::detail_dataset::write_text_file(
      ckdir / "metrics.csv", with_provenance_header(prov, stg::metrics_csv(metrics)));
  write_meta_sidecar(ckdir);
  std::printf("checkpoints and metrics in %s\n", ckdir.string().c_str());
  return 0;
}

int cmd_eval(const stg::RunConfig& rc, const std::vector<std::string>& argv,
             const std::string& ckpt_path, bool oracle, bool shuffled,
             bool localization, const std::string& tag_flag) {
  stg::Dataset ds = stg::load_dataset(rc.dataset_dir());
  const auto split = rc.str("eval.split");
  const fs::path rdir = rc.report_dir();
  fs::create_directories(rdir);
  const auto prov = stg::provenance_json(rc, argv, ds.hash_hex);

  stg::AccuracyReport rep;
  stg::Checkpoint ck;
  double shuffle_delta = 0.0;
  if (oracle) {
    STG_CONFIG_CHECK(!localization, "--localization needs a trained checkpoint");
    rep = stg::evaluate_predictor(ds, ds.item_ids_for_split(split),
                                  [&](const stg::QAItem& q) {
                                    return ds.answers.id(q.answer);
                                  });
    rep.split = split;
    rep.model_tag = tag_flag.empty() ? "oracle" : tag_flag;
  } else {
    STG_CONFIG_CHECK(!ckpt_path.empty(), "eval needs --checkpoint or --oracle");
    ck = stg::load_checkpoint(ckpt_path);
    STG_CONFIG_CHECK(ck.dataset_hash == ds.hash_hex,
                     "checkpoint was trained on a different dataset (hash " +
                         ck.dataset_hash + " vs " + ds.hash_hex + ")");
    rep = shuffled ? stg::shuffle_eval(ds, ck.params, split, rc.seed())
                   : stg::evaluate(ds, ck.params, split);
    rep.model_tag = tag_flag.empty() ? stg::ablation_flags_string(ck.params.cfg)
                                     : tag_flag;
    rep.seed = ck.train_config.seed;
    if (shuffled)
      shuffle_delta =
          stg::shuffle_logit_delta(ds, ck.params, ds.item_ids_for_split(split),
                                   rc.seed());
  }

  ordered_json j = stg::report_json(rep);
  if (shuffled)
    j["shuffle"] = {{"seed", rc.seed()}, {"max_logit_delta", shuffle_delta}};
  j["provenance"] = prov;
  const std::string stem =
      "eval_" + rep.model_tag + "_" + split + (shuffled ? "_shuffled" : "");
  stg::detail_dataset::write_text_file(rdir / (stem + ".json"), j.dump(2) + "\n");
  stg::detail_dataset::write_text_file(
      rdir / (stem + ".csv"), with_provenance_header(prov, stg::report_csv(rep)));
  std::printf("%s: overall %.4f over %zu items (%s)\n", rep.model_tag.c_str(),
              rep.overall(), rep.overall_cell().total, split.c_str());
  if (shuffled)
    std::printf("segment shuffle: max answer-logit delta %.3e\n", shuffle_delta);

  if (localization) {
    const auto loc = stg::localization_score(ds, ck.params, split);
    ordered_json lj;
    lj["score"] = loc.score;
    lj["chance"] = loc.chance;
    lj["considered_segments"] = loc.considered;
    lj["skipped_segments"] = loc.skipped;
    lj["mean_truth_cells"] = loc.mean_truth_cells;
    lj["provenance"] = prov;
    const std::string lstem = "localization_" + rep.model_tag + "_" + split;
    stg::detail_dataset::write_text_file(rdir / (lstem + ".json"),
                                         lj.dump(2) + "\n");
    const auto heatmap = stg::localization_heatmap_csv(
        ds, ck.params, stg::detail_train::split_scene_indices(ds, split), 8);
    stg::detail_dataset::write_text_file(rdir / ("heatmap_" + rep.model_tag +
                                                 "_" + split + ".csv"),
                                         with_provenance_header(prov, heatmap));
    std::printf("localization: %.4f (chance %.4f) over %zu segments\n", loc.score,
                loc.chance, loc.considered);
  }
  write_meta_sidecar(rdir);
  return 0;
}

int cmd_report(const stg::RunConfig& rc, const std::vector<std::string>& argv,
               const std::vector<std::string>& inputs, const std::string& output) {
  STG_CONFIG_CHECK(!inputs.empty(), "report needs at least one eval output");
  std::vector<stg::AccuracyReport> reports;
  std::string dataset_hash;
  for (const auto& path : inputs) {
    STG_CONFIG_CHECK(fs::exists(path), "missing eval output: " + path);
    const auto j =
        ordered_json::parse(stg::detail_dataset::read_text_file(path));
    auto r = stg::report_from_json(j);
    STG_CONFIG_CHECK(dataset_hash.empty() || dataset_hash == r.dataset_hash,
                     "eval outputs come from different datasets: " + path);
    dataset_hash = r.dataset_hash;
    reports.push_back(std::move(r));
  }
  // Ladder rows sort into their canonical order; other tags keep input order.
  const auto& ladder = stg::ablation_row_names();
  std::stable_sort(reports.begin(), reports.end(),
                   [&](const stg::AccuracyReport& a, const stg::AccuracyReport& b) {
                     const auto idx = [&](const std::string& tag) {
                       for (std::size_t i = 0; i < ladder.size(); ++i)
                         if (ladder[i] == tag) return i;
                       return ladder.size();
                     };
                     return idx(a.model_tag) < idx(b.model_tag);
                   });
  const fs::path rdir = rc.report_dir();
  fs::create_directories(rdir);
  const auto prov = stg::provenance_json(rc, argv, dataset_hash);
  stg::detail_dataset::write_text_file(
      rdir / output, with_provenance_header(prov, stg::reports_csv(reports)));
  write_meta_sidecar(rdir);
  std::printf("merged %zu reports into %s\n", reports.size(),
              (rdir / output).string().c_str());
  return 0;
}

int cmd_gradcheck(const std::string& op, double eps) {
  const auto results = stg::grad_check_battery(eps, op);
  STG_CONFIG_CHECK(!results.empty(), "no gradient checks match --op " + op);
  int failed = 0;
  const stg::OpCheckResult* worst = &results.front();
  for (const auto& r : results) {
    std::printf("%-22s max_rel_error %10.3e  (tol %.0e, %zu coords)  %s\n",
                r.name.c_str(), r.max_rel_error, r.tolerance, r.checked_coords,
                r.pass ? "ok" : "FAIL");
    failed += !r.pass;
    if (r.max_rel_error / r.tolerance > worst->max_rel_error / worst->tolerance)
      worst = &r;
  }
  std::printf("worst: %s at %.3e (tol %.0e)\n", worst->name.c_str(),
              worst->max_rel_error, worst->tolerance);
  if (failed > 0) {
    std::printf("%d of %zu checks failed\n", failed, results.size());
    return 3;
  }
  std::printf("all %zu checks passed\n", results.size());
  return 0;
}

int run(int argc, char** argv) {
  const std::vector<std::string> argv_vec(argv, argv + argc);
  CLI::App app{"spatio-temporal grounding audio-visual question answering"};
  app.require_subcommand(1);

  std::string config_path, preset = "desk";
  std::map<std::string, std::string> flag_map;
  app.add_option("--config", config_path, "settings file ([section] key = value)");
  app.add_option("--preset", preset, "desk or parity")
      ->check(CLI::IsMember({"desk", "parity"}));
  const auto bind = [&flag_map](CLI::App* cmd, const std::string& flag,
                                const std::string& key, const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&flag_map, key](const std::string& v) { flag_map[key] = v; }, desc);
  };
  bind(&app, "--seed", "run.seed", "master seed for every derived stream");
  bind(&app, "--out", "run.out", "output root directory");
  bind(&app, "--dataset-dir", "paths.dataset", "dataset directory override");
  bind(&app, "--checkpoint-dir", "paths.checkpoints", "checkpoint directory override");
  bind(&app, "--report-dir", "paths.reports", "report directory override");

  auto* generate = app.add_subcommand("generate", "generate a synthetic dataset");
  bind(generate, "--scenes", "scene.scenes", "number of scenes");
  bind(generate, "--qa-per-scene", "scene.qa_per_scene", "question cap per scene");

  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string stage = "both", init_path, resume_path;
  bool from_scratch = false;
  train->add_option("--stage", stage, "1, 2, or both")
      ->check(CLI::IsMember({"1", "2", "both"}));
  train->add_option("--init", init_path, "stage-1 checkpoint to start stage 2 from");
  train->add_option("--resume", resume_path, "stage-2 checkpoint to continue");
  train->add_flag("--from-scratch", from_scratch, "run stage 2 without pretraining");
  bind(train, "--ablation", "train.ablation",
       "model row: q, a+q, v+q, av+q, av+q+tg, av+q+tg+sg");
  bind(train, "--epochs", "train.stage2_epochs", "stage-2 epoch count");
  bind(train, "--stage1-epochs", "train.stage1_epochs", "stage-1 epoch count");
  bind(train, "--batch", "train.batch_size", "mini-batch size");
  bind(train, "--lr0", "train.lr0", "initial learning rate");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, tag_flag;
  bool oracle = false, shuffled = false, localization = false;
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file");
  eval_cmd->add_flag("--oracle", oracle, "score the ground-truth oracle predictor");
  eval_cmd->add_flag("--shuffle-segments", shuffled,
                     "evaluate with per-item segment permutations");
  eval_cmd->add_flag("--localization", localization,
                     "also score spatial-attention localization");
  eval_cmd->add_option("--tag", tag_flag, "row name used in reports");
  bind(eval_cmd, "--split", "eval.split", "train, val, or test");

  auto* report = app.add_subcommand("report", "merge eval outputs into one table");
  std::vector<std::string> inputs;
  std::string output = "summary.csv";
  report->add_option("--inputs", inputs, "eval .json outputs to merge")
      ->expected(-1);
  report->add_option("--output", output, "merged csv filename");

  auto* gradcheck = app.add_subcommand("gradcheck", "verify gradients numerically");
  std::string only_op;
  double eps = 1e-5;
  gradcheck->add_option("--op", only_op, "run only checks whose name contains this");
  gradcheck->add_option("--eps", eps, "finite-difference step");

  for (auto* sub : {generate, train, eval_cmd, report, gradcheck})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (app.got_subcommand(gradcheck)) return cmd_gradcheck(only_op, eps);

  std::map<std::string, std::string> file_entries;
  if (!config_path.empty()) {
    STG_CONFIG_CHECK(fs::exists(config_path), "missing config file: " + config_path);
    file_entries = stg::parse_config_text(
        stg::detail_dataset::read_text_file(config_path));
  }
  stg::RunConfig rc = stg::resolve_run_config(
      preset, file_entries, stg::env_settings(stg::process_environment()),
      flag_map);
  rc.config_path = config_path;

  if (app.got_subcommand(generate)) return cmd_generate(rc, argv_vec);
  if (app.got_subcommand(train))
    return cmd_train(rc, argv_vec, flag_map, stage, init_path, resume_path,
                     from_scratch);
  if (app.got_subcommand(eval_cmd))
    return cmd_eval(rc, argv_vec, ckpt_path, oracle, shuffled, localization,
                    tag_flag);
  if (app.got_subcommand(report)) return cmd_report(rc, argv_vec, inputs, output);
  throw stg::InvariantError("unreachable subcommand dispatch");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const stg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const stg::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const stg::InvariantError& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
