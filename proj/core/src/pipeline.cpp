#include "crfu/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crfu/backdoor.hpp"
#include "crfu/checkpoint.hpp"
#include "crfu/errors.hpp"
#include "crfu/rng.hpp"

namespace fs = std::filesystem;

namespace crfu {

namespace {

constexpr std::size_t kRemainProbeCap = 500;
constexpr float kReportStopThreshold = 0.02f;

[[noreturn]] void fail_stage(const std::string& stage, const std::exception& e) {
  throw std::runtime_error("pipeline stage '" + stage + "' failed: " + e.what());
}

std::uint64_t derive(std::uint64_t seed, const std::string& name) {
  return Rng::substream(seed, name).next_u64();
}

LabeledSet seeded_subset(const LabeledSet& set, std::size_t count, std::uint64_t seed) {
  std::vector<std::uint32_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(count, idx.size()));
  std::sort(idx.begin(), idx.end());
  return set.subset(idx);
}

std::string format_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void dump_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f << "# resolved experiment configuration\n";
  f << "data.source = " << cfg.data.source << '\n';
  f << "data.synth_n = " << cfg.data.synth_n << '\n';
  f << "data.synth_classes = " << cfg.data.synth_classes << '\n';
  f << "data.synth_d = " << cfg.data.synth_d << '\n';
  f << "train.beta = " << format_g(cfg.train.beta) << '\n';
  f << "train.epochs = " << cfg.train.epochs << '\n';
  f << "train.batch_size = " << cfg.train.batch_size << '\n';
  f << "train.learning_rate = " << format_g(cfg.train.learning_rate) << '\n';
  f << "unlearn.beta = " << format_g(cfg.unlearn.beta) << '\n';
  f << "unlearn.beta_u = " << format_g(cfg.unlearn.beta_u) << '\n';
  f << "unlearn.max_epochs = " << cfg.unlearn.max_epochs << '\n';
  f << "unlearn.stop_backdoor_acc = " << format_g(cfg.unlearn.stop_backdoor_acc) << '\n';
  f << "poison.edr = " << format_g(cfg.edr) << '\n';
  f << "run.seed = " << cfg.seed << '\n';
}

struct TrendCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

std::string check_line(const TrendCheck& c) {
  std::string line = c.name + ": " + (c.pass ? "PASS" : "FAIL");
  if (!c.detail.empty()) line += " (" + c.detail + ")";
  return line;
}

// Adjacent-pair monotonicity with one allowed violation of bounded size.
TrendCheck monotone_check(const std::string& name, const std::vector<double>& xs,
                          const std::vector<double>& ys, bool increasing, double slack,
                          bool slack_relative) {
  TrendCheck c;
  c.name = name;
  std::size_t violations = 0;
  for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
    double prev = ys[i], next = ys[i + 1];
    double drift = increasing ? prev - next : next - prev;  // positive = violation
    if (drift <= 0.0) continue;
    double magnitude = slack_relative ? drift / std::max(std::abs(prev), 1e-12) : drift;
    ++violations;
    if (violations > 1 || magnitude > slack) {
      c.pass = false;
      std::ostringstream os;
      os << "pair x=" << format_g(xs[i]) << " -> x=" << format_g(xs[i + 1]) << ": "
         << format_g(prev) << " vs " << format_g(next);
      c.detail = os.str();
      return c;
    }
  }
  if (violations == 1) c.detail = "one adjacent violation within slack";
  return c;
}

std::size_t threshold_epoch_from_manifest(const std::string& dir) {
  RunManifest m = read_manifest(dir + "/manifest.txt");
  return m.reached_threshold ? m.threshold_epoch : SIZE_MAX;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
  try {
    PreparedData out;
    LabeledSet full;
    if (cfg.data.source == "synth") {
      std::uint64_t data_seed = derive(cfg.seed, "data");
      full = synth_blobs_matched(data_seed, cfg.data.synth_n, cfg.data.synth_classes,
                                 cfg.data.synth_d, 0);
      out.test = synth_blobs_matched(data_seed, cfg.data.synth_test_n, cfg.data.synth_classes,
                                     cfg.data.synth_d, 1);
    } else {
      full = load_idx(cfg.data.train_images, cfg.data.train_labels, cfg.data.class_count);
      if (cfg.data.test_images.empty() || cfg.data.test_labels.empty()) {
        throw InputError("idx source requires data.test_images and data.test_labels");
      }
      out.test = load_idx(cfg.data.test_images, cfg.data.test_labels, cfg.data.class_count);
      if (cfg.data.train_subset > 0 && cfg.data.train_subset < full.size()) {
        full = seeded_subset(full, cfg.data.train_subset, derive(cfg.seed, "data.subset"));
      }
    }
    auto [victim, aux] = holdout_split(full, 0.5, derive(cfg.seed, "split"));
    out.victim_pool = std::move(victim);
    out.aux = std::move(aux);
    out.split = poison_split(out.victim_pool, cfg.edr, cfg.trigger, derive(cfg.seed, "poison"));
    return out;
  } catch (const std::exception& e) {
    fail_stage("data", e);
  }
}

VictimArtifacts train_victim(const ExperimentConfig& cfg, const PreparedData& data) {
  try {
    VictimArtifacts out;
    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive(cfg.seed, "train");
    out.before = train_ib(data.split.full, tcfg, cfg.dims, &out.trace);
    return out;
  } catch (const std::exception& e) {
    fail_stage("train", e);
  }
}

UnlearnArtifacts unlearn_victim(const ExperimentConfig& cfg, const PreparedData& data,
                                const IBModel& before) {
  try {
    UnlearnArtifacts out;
    UnlearnConfig ucfg = cfg.unlearn;
    ucfg.seed = derive(cfg.seed, "unlearn");
    LabeledSet remaining = data.split.remaining();
    LabeledSet probe = remaining.size() > kRemainProbeCap
                           ? seeded_subset(remaining, kRemainProbeCap, derive(cfg.seed, "probe.remain"))
                           : remaining;
    auto [after, trace] = unlearn(before, data.split.erased(), ucfg, probe);
    out.after = std::move(after);
    out.trace = std::move(trace);
    return out;
  } catch (const std::exception& e) {
    fail_stage("unlearn", e);
  }
}

AttackOutcome attack_victim(const ExperimentConfig& cfg, const PreparedData& data,
                            const IBModel& before, const IBModel& after) {
  try {
    AttackOutcome out;
    ShadowProtocol protocol;
    protocol.train = cfg.train;
    protocol.dims = cfg.dims;
    protocol.unlearn = cfg.unlearn;
    protocol.trigger = cfg.trigger;
    protocol.edr = cfg.edr;
    protocol.shadow_fraction = cfg.shadow_fraction;
    protocol.mode = cfg.delta_mode;
    std::vector<DeltaRecord> corpus =
        build_shadow_corpus(data.aux, cfg.shadow_count, protocol, derive(cfg.seed, "attack.shadows"));
    out.net = train_reconstructor(corpus, cfg.attack_epochs, cfg.attack_lr,
                                  derive(cfg.seed, "attack"));

    LabeledSet erased = data.split.erased();
    out.recon_mse = reconstruction_mse(out.net, before, after, erased, cfg.delta_mode);

    std::size_t probe_n = cfg.probe_count > 0 ? cfg.probe_count : erased.size();
    probe_n = std::min(probe_n, data.aux.size());
    LabeledSet non_member = seeded_subset(data.aux, probe_n, derive(cfg.seed, "attack.probe"));
    out.member_auc = membership_auc(before, after, erased, non_member, cfg.delta_mode);
    return out;
  } catch (const std::exception& e) {
    fail_stage("attack", e);
  }
}

void write_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.config_hash));
  f << "tool_version = " << m.tool_version << '\n';
  f << "config_hash = " << hash << '\n';
  f << "pool_n = " << m.pool_n << '\n';
  f << "erased_count = " << m.erased_count << '\n';
  f << "train_sample_grads = " << m.train_sample_grads << '\n';
  f << "unlearn_sample_grads = " << m.unlearn_sample_grads << '\n';
  f << "reached_threshold = " << (m.reached_threshold ? "true" : "false") << '\n';
  f << "threshold_epoch = " << m.threshold_epoch << '\n';
  f << "wall_ms = " << format_g(m.wall_ms) << '\n';
  std::string files;
  for (const std::string& a : m.artifacts) {
    if (!files.empty()) files += ",";
    files += a;
  }
  f << "artifacts = " << files << '\n';
}

RunManifest read_manifest(const std::string& path) {
  KvConfig kv = KvConfig::load(path);
  RunManifest m;
  m.tool_version = kv.get_str("tool_version", "");
  m.config_hash = std::stoull(kv.require_str("config_hash"), nullptr, 16);
  m.pool_n = kv.get_u64("pool_n", 0);
  m.erased_count = kv.get_u64("erased_count", 0);
  m.train_sample_grads = kv.get_u64("train_sample_grads", 0);
  m.unlearn_sample_grads = kv.get_u64("unlearn_sample_grads", 0);
  m.reached_threshold = kv.get_bool("reached_threshold", false);
  m.threshold_epoch = kv.get_u64("threshold_epoch", 0);
  m.wall_ms = kv.get_f64("wall_ms", 0.0);
  std::stringstream ss(kv.get_str("artifacts", ""));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) m.artifacts.push_back(item);
  }
  return m;
}

MetricRow run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  auto wall_start = std::chrono::steady_clock::now();

  dump_config(out_dir + "/config.txt", cfg);
  PreparedData data = prepare_data(cfg);
  VictimArtifacts victim = train_victim(cfg, data);
  save_ib_model(out_dir + "/before.ckpt", victim.before);
  write_train_trace(out_dir + "/trace_train.csv", victim.trace);

  UnlearnArtifacts unlearned = unlearn_victim(cfg, data, victim.before);
  save_ib_model(out_dir + "/after.ckpt", unlearned.after);
  write_unlearn_trace(out_dir + "/trace_unlearn.csv", unlearned.trace);

  AttackOutcome attack = attack_victim(cfg, data, victim.before, unlearned.after);

  MetricRow row;
  try {
    row.beta = cfg.train.beta;
    row.beta_u = cfg.unlearn.beta_u;
    row.edr = static_cast<float>(cfg.edr);
    row.seed = cfg.seed;
    row.accuracy = static_cast<float>(accuracy(unlearned.after, data.test));
    row.backdoor_acc = static_cast<float>(backdoor_accuracy(unlearned.after, data.split.erased()));
    row.recon_mse = static_cast<float>(attack.recon_mse);
    row.member_auc = static_cast<float>(attack.member_auc);
    row.kld_to_prior = static_cast<float>(kld_to_prior(unlearned.after, data.split.full));
    double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               wall_start)
                         .count();
    // Virtual time (1 us per sample-gradient) keeps metrics.csv byte-stable
    // across identical runs; real wall-clock goes to the manifest.
    row.runtime_ms = cfg.deterministic_timing
                         ? static_cast<float>(unlearned.trace.sample_grads) * 1e-3f
                         : static_cast<float>(wall_ms);
    row.sample_grads = unlearned.trace.sample_grads;
    row.validate();
    write_metrics_csv(out_dir + "/metrics.csv", {row});

    RunManifest manifest;
    manifest.config_hash = cfg.config_hash;
    manifest.pool_n = data.victim_pool.size();
    manifest.erased_count = data.split.erased_idx.size();
    manifest.train_sample_grads = victim.trace.sample_grads;
    manifest.unlearn_sample_grads = unlearned.trace.sample_grads;
    manifest.reached_threshold = unlearned.trace.reached_threshold;
    manifest.threshold_epoch = unlearned.trace.threshold_epoch;
    manifest.wall_ms = wall_ms;
    manifest.artifacts = {"config.txt",         "before.ckpt",       "after.ckpt",
                          "trace_train.csv",    "trace_unlearn.csv", "metrics.csv"};
    write_manifest(out_dir + "/manifest.txt", manifest);
  } catch (const std::runtime_error&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("metrics", e);
  }
  return row;
}

SweepResult sweep(const ExperimentConfig& cfg, const std::string& axis,
                  const std::vector<double>& values, const std::string& out_dir) {
  if (values.empty()) throw InputError("sweep: values must be nonempty");
  if (!std::is_sorted(values.begin(), values.end())) {
    throw InputError("sweep: values must be ascending");
  }
  if (axis != "beta" && axis != "beta-u" && axis != "edr") {
    throw InputError("sweep: axis must be one of beta, beta-u, edr");
  }
  fs::create_directories(out_dir);

  // beta-u leaves the trained victim untouched, so it is trained once and
  // the identical "before" checkpoint is reused at every point. beta changes
  // the training objective and edr changes the poisoned data; both retrain.
  std::optional<PreparedData> shared_data;
  std::optional<VictimArtifacts> shared_victim;
  if (axis == "beta-u") {
    shared_data = prepare_data(cfg);
    shared_victim = train_victim(cfg, *shared_data);
  }

  SweepResult result;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    ExperimentConfig point = cfg;
    if (axis == "beta") {
      point.train.beta = static_cast<float>(v);
      point.unlearn.beta = static_cast<float>(v);
    } else if (axis == "beta-u") {
      point.unlearn.beta_u = static_cast<float>(v);
    } else {
      point.edr = v;
    }
    std::ostringstream dir;
    dir << out_dir << '/' << axis << '_' << i << '_' << format_g(v);
    try {
      MetricRow row;
      if (axis == "beta-u") {
        // Same artifacts layout as run_pipeline, with the shared victim.
        fs::create_directories(dir.str());
        dump_config(dir.str() + "/config.txt", point);
        auto wall_start = std::chrono::steady_clock::now();
        save_ib_model(dir.str() + "/before.ckpt", shared_victim->before);
        write_train_trace(dir.str() + "/trace_train.csv", shared_victim->trace);
        UnlearnArtifacts unlearned = unlearn_victim(point, *shared_data, shared_victim->before);
        save_ib_model(dir.str() + "/after.ckpt", unlearned.after);
        write_unlearn_trace(dir.str() + "/trace_unlearn.csv", unlearned.trace);
        AttackOutcome attack =
            attack_victim(point, *shared_data, shared_victim->before, unlearned.after);
        row.beta = point.train.beta;
        row.beta_u = point.unlearn.beta_u;
        row.edr = static_cast<float>(point.edr);
        row.seed = point.seed;
        row.accuracy = static_cast<float>(accuracy(unlearned.after, shared_data->test));
        row.backdoor_acc =
            static_cast<float>(backdoor_accuracy(unlearned.after, shared_data->split.erased()));
        row.recon_mse = static_cast<float>(attack.recon_mse);
        row.member_auc = static_cast<float>(attack.member_auc);
        row.kld_to_prior =
            static_cast<float>(kld_to_prior(unlearned.after, shared_data->split.full));
        row.runtime_ms = point.deterministic_timing
                             ? static_cast<float>(unlearned.trace.sample_grads) * 1e-3f
                             : static_cast<float>(std::chrono::duration<double, std::milli>(
                                                      std::chrono::steady_clock::now() - wall_start)
                                                      .count());
        row.sample_grads = unlearned.trace.sample_grads;
        row.validate();
        write_metrics_csv(dir.str() + "/metrics.csv", {row});
        RunManifest manifest;
        manifest.config_hash = point.config_hash;
        manifest.pool_n = shared_data->victim_pool.size();
        manifest.erased_count = shared_data->split.erased_idx.size();
        manifest.train_sample_grads = shared_victim->trace.sample_grads;
        manifest.unlearn_sample_grads = unlearned.trace.sample_grads;
        manifest.reached_threshold = unlearned.trace.reached_threshold;
        manifest.threshold_epoch = unlearned.trace.threshold_epoch;
        manifest.wall_ms = 0.0;
        manifest.artifacts = {"config.txt",         "before.ckpt",       "after.ckpt",
                              "trace_train.csv",    "trace_unlearn.csv", "metrics.csv"};
        write_manifest(dir.str() + "/manifest.txt", manifest);
      } else {
        row = run_pipeline(point, dir.str());
      }
      result.rows.push_back(row);
    } catch (const std::exception& e) {
      result.failures.push_back({v, e.what()});
    }
  }

  std::string axis_file = axis == "beta-u" ? "beta_u" : axis;
  result.csv_path = out_dir + "/sweep_" + axis_file + ".csv";
  write_metrics_csv(result.csv_path, result.rows);
  std::ofstream meta(out_dir + "/sweep_meta.txt", std::ios::trunc);
  meta << "axis = " << axis << '\n';
  std::string vals;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) vals += ",";
    vals += format_g(values[i]);
  }
  meta << "values = " << vals << '\n';
  std::string dirs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) dirs += ",";
    dirs += axis + "_" + std::to_string(i) + "_" + format_g(values[i]);
  }
  meta << "point_dirs = " << dirs << '\n';
  return result;
}

ReportResult report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw InputError("report: no such directory: " + run_dir);

  std::vector<TrendCheck> checks;
  std::ostringstream text;
  bool found_any = false;

  auto emit_plot = [&](const std::string& name, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
    std::ofstream f(run_dir + "/" + name, std::ios::trunc);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "\t" : "") << header[i];
    f << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "\t" : "") << format_g(r[i]);
      f << '\n';
    }
  };

  std::string beta_csv = run_dir + "/sweep_beta.csv";
  if (fs::exists(beta_csv)) {
    found_any = true;
    std::vector<MetricRow> rows = read_metrics_csv(beta_csv);
    if (rows.size() >= 2) {
      std::vector<double> betas, mses, aucs, klds, accs;
      std::vector<std::vector<double>> plot;
      for (const MetricRow& r : rows) {
        betas.push_back(r.beta);
        mses.push_back(r.recon_mse);
        aucs.push_back(r.member_auc);
        klds.push_back(r.kld_to_prior);
        accs.push_back(r.accuracy);
        plot.push_back({r.beta, r.recon_mse, r.member_auc, r.kld_to_prior, r.accuracy});
      }
      emit_plot("plot_beta.tsv", {"beta", "recon_mse", "member_auc", "kld_to_prior", "accuracy"},
                plot);

      checks.push_back(monotone_check("MSE trend (non-decreasing in beta, <=1 violation <=2%)",
                                      betas, mses, true, 0.02, true));
      TrendCheck ratio;
      ratio.name = "MSE ratio (beta max vs beta min >= 1.5x)";
      double r = mses.front() > 0 ? mses.back() / mses.front() : 0.0;
      ratio.pass = r >= 1.5;
      ratio.detail = "ratio " + format_g(r);
      checks.push_back(ratio);

      checks.push_back(monotone_check("AUC trend (non-increasing in beta, <=1 violation <=0.02)",
                                      betas, aucs, false, 0.02, false));
      TrendCheck ends;
      ends.name = "AUC endpoints (final <= 0.58, drop >= 0.05)";
      ends.pass = aucs.back() <= 0.58 && aucs.front() >= aucs.back() + 0.05;
      ends.detail = "first " + format_g(aucs.front()) + ", last " + format_g(aucs.back());
      checks.push_back(ends);

      std::vector<double> pos_betas, pos_klds;
      for (std::size_t i = 0; i < betas.size(); ++i) {
        if (betas[i] > 0.0) {
          pos_betas.push_back(betas[i]);
          pos_klds.push_back(klds[i]);
        }
      }
      TrendCheck kld;
      kld.name = "KLD trend (strictly decreasing over beta > 0, >= 10x total)";
      for (std::size_t i = 0; i + 1 < pos_klds.size(); ++i) {
        if (!(pos_klds[i + 1] < pos_klds[i])) {
          kld.pass = false;
          kld.detail = "pair beta=" + format_g(pos_betas[i]) + " -> beta=" +
                       format_g(pos_betas[i + 1]);
        }
      }
      if (kld.pass && pos_klds.size() >= 2) {
        double kr = pos_klds.back() > 0 ? pos_klds.front() / pos_klds.back() : 1e9;
        kld.pass = kr >= 10.0;
        kld.detail = "ratio " + format_g(kr);
      }
      checks.push_back(kld);

      TrendCheck acc;
      acc.name = "accuracy degradation (beta min -> beta max <= 4 points)";
      double drop = accs.front() - accs.back();
      acc.pass = drop <= 0.04;
      acc.detail = "drop " + format_g(drop);
      checks.push_back(acc);
    }
  }

  std::string beta_u_csv = run_dir + "/sweep_beta_u.csv";
  if (fs::exists(beta_u_csv)) {
    found_any = true;
    std::vector<MetricRow> rows = read_metrics_csv(beta_u_csv);
    std::vector<std::vector<double>> plot;
    TrendCheck erased;
    erased.name = "backdoor erased per beta_u row (<= 2%)";
    for (const MetricRow& r : rows) {
      if (r.backdoor_acc > kReportStopThreshold) {
        erased.pass = false;
        erased.detail = "beta_u " + format_g(r.beta_u) + ": " + format_g(r.backdoor_acc);
      }
      plot.push_back({r.beta_u, r.backdoor_acc, r.accuracy,
                      static_cast<double>(r.sample_grads)});
    }
    emit_plot("plot_beta_u.tsv", {"beta_u", "backdoor_acc", "accuracy", "sample_grads"}, plot);
    checks.push_back(erased);

    if (rows.size() >= 2) {
      KvConfig meta = KvConfig::load(run_dir + "/sweep_meta.txt");
      std::stringstream ss(meta.get_str("point_dirs", ""));
      std::vector<std::string> dirs;
      std::string item;
      while (std::getline(ss, item, ',')) dirs.push_back(item);
      if (dirs.size() == rows.size()) {
        std::size_t slow = threshold_epoch_from_manifest(run_dir + "/" + dirs.front());
        std::size_t fast = threshold_epoch_from_manifest(run_dir + "/" + dirs.back());
        TrendCheck speed;
      speed.name = "unlearning speed (largest beta_u crosses threshold first)";
        speed.pass = fast < slow;
        speed.detail = "epochs " + std::to_string(fast == SIZE_MAX ? 0 : fast) + " vs " +
                       (slow == SIZE_MAX ? std::string("never") : std::to_string(slow));
        checks.push_back(speed);
      }
    }
  }

  std::string edr_csv = run_dir + "/sweep_edr.csv";
  if (fs::exists(edr_csv)) {
    found_any = true;
    std::vector<MetricRow> rows = read_metrics_csv(edr_csv);
    KvConfig meta = KvConfig::load(run_dir + "/sweep_meta.txt");
    std::stringstream ss(meta.get_str("point_dirs", ""));
    std::vector<std::string> dirs;
    std::string item;
    while (std::getline(ss, item, ',')) dirs.push_back(item);

    std::vector<std::vector<double>> plot;
    TrendCheck erased;
    erased.name = "backdoor erased per edr row (<= 2%)";
    TrendCheck arith;
    arith.name = "erased count arithmetic (|D_e| == round(edr * n))";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const MetricRow& r = rows[i];
      double n_erased = 0.0;
      if (i < dirs.size()) {
        RunManifest m = read_manifest(run_dir + "/" + dirs[i] + "/manifest.txt");
        n_erased = static_cast<double>(m.erased_count);
        double expect = std::llround(static_cast<double>(r.edr) * static_cast<double>(m.pool_n));
        if (n_erased != expect) {
          arith.pass = false;
          arith.detail = "edr " + format_g(r.edr) + ": " + format_g(n_erased) + " vs " +
                         format_g(expect);
        }
      }
      if (r.backdoor_acc > kReportStopThreshold) {
        erased.pass = false;
        erased.detail = "edr " + format_g(r.edr) + ": " + format_g(r.backdoor_acc);
      }
      plot.push_back({r.edr, n_erased, r.accuracy, r.backdoor_acc});
    }
    emit_plot("plot_edr.tsv", {"edr", "n_erased", "accuracy", "backdoor_acc"}, plot);
    checks.push_back(erased);
    checks.push_back(arith);
  }

  std::string single_csv = run_dir + "/metrics.csv";
  if (!found_any && fs::exists(single_csv)) {
    found_any = true;
    std::vector<MetricRow> rows = read_metrics_csv(single_csv);
    TrendCheck erased;
    erased.name = "backdoor erased (<= 2%)";
    for (const MetricRow& r : rows) {
      if (r.backdoor_acc > kReportStopThreshold) {
        erased.pass = false;
        erased.detail = "backdoor_acc " + format_g(r.backdoor_acc);
      }
    }
    checks.push_back(erased);
  }

  if (!found_any) throw InputError("report: no sweep or metrics CSVs under " + run_dir);

  ReportResult result;
  text << "crfu report (" << kToolVersion << ") for " << run_dir << '\n';
  for (const TrendCheck& c : checks) {
    text << check_line(c) << '\n';
    result.all_pass = result.all_pass && c.pass;
  }
  text << (result.all_pass ? "ALL CHECKS PASSED" : "CHECKS FAILED") << '\n';
  result.text = text.str();

  std::ofstream f(run_dir + "/report.txt", std::ios::trunc);
  if (!f) throw InputError("cannot write report.txt");
  f << result.text;
  return result;
}

}  // namespace crfu
