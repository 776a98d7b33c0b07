// Command-line front end: synth -> preprocess -> train -> benchmark.
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "spikehar/config.hpp"
#include "spikehar/data_io.hpp"
#include "spikehar/errors.hpp"
#include "spikehar/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spikehar;

namespace {

// Index-parallel loop with a worker cap; results must be written by index.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  size_t workers = std::min(static_cast<size_t>(jobs), n);
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

Config load_config(const std::string& path) {
  if (path.empty()) return Config{};
  Config cfg = Config::from_file(path);
  cfg.check_known(all_config_keys());
  return cfg;
}

std::string resolve(const fs::path& base_file, const std::string& relative) {
  fs::path p(relative);
  if (p.is_absolute()) return relative;
  return (base_file.parent_path() / p).string();
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
  std::string config_path, out_dir;
  int count_per_class = 14;
  int subjects = 7;
  int64_t seed = -1;
  int jobs = 1;
};

int cmd_synth(const SynthArgs& args) {
  Config cfg = load_config(args.config_path);
  SynthConfig sc = synth_config_from(cfg);
  if (args.seed >= 0) sc.seed = static_cast<uint64_t>(args.seed);
  if (args.count_per_class < 1) throw ConfigError("count-per-class must be >= 1");
  if (args.subjects < 1) throw ConfigError("subjects must be >= 1");

  fs::create_directories(args.out_dir);
  const int classes = static_cast<int>(sc.profiles.size());
  const size_t total = static_cast<size_t>(classes * args.count_per_class);
  std::vector<ManifestEntry> entries(total);

  parallel_for(total, args.jobs, [&](size_t i) {
    int c = static_cast<int>(i) / args.count_per_class;
    int k = static_cast<int>(i) % args.count_per_class;
    int subject = 1 + k % args.subjects;
    CirRecording rec = synth_generate(sc, c, subject, k);
    std::string name = sc.profiles[static_cast<size_t>(c)].name + "_s" + std::to_string(subject) +
                       "_" + std::to_string(k) + ".cir";
    write_cir((fs::path(args.out_dir) / name).string(), rec);
    entries[i] = ManifestEntry{name, c, subject, rec.packets};
  });

  std::string manifest = (fs::path(args.out_dir) / "manifest.csv").string();
  write_manifest(manifest, entries);
  std::cout << "wrote " << total << " recordings and " << manifest << "\n";
  return 0;
}

// ---- preprocess ----------------------------------------------------------

struct PreprocessArgs {
  std::string manifest_path, config_path, out_dir;
  int jobs = 1;
};

int cmd_preprocess(const PreprocessArgs& args) {
  Config cfg = load_config(args.config_path);
  PreprocessParams params = preprocess_params_from(cfg);
  auto manifest = read_manifest(args.manifest_path);
  if (manifest.empty()) throw FormatError(args.manifest_path + ": empty manifest");
  fs::create_directories(args.out_dir);

  std::vector<std::vector<SampleIndexEntry>> per_recording(manifest.size());
  std::atomic<int> skipped{0};
  std::mutex log_mu;
  parallel_for(manifest.size(), args.jobs, [&](size_t i) {
    const ManifestEntry& entry = manifest[i];
    CirRecording rec = read_cir(resolve(args.manifest_path, entry.path));
    rec.label = entry.label;
    rec.subject = entry.subject;
    std::string stem = fs::path(entry.path).stem().string();
    std::vector<Sample> samples = build_sample(rec, params, stem);
    if (samples.empty()) {
      ++skipped;
      std::lock_guard<std::mutex> lock(log_mu);
      std::cerr << "warning: " << entry.path << " yields no samples (" << rec.packets
                << " packets < minimum)\n";
      return;
    }
    for (const Sample& s : samples) {
      std::string name = stem + "_" + std::to_string(s.segment_index) + ".spkc";
      write_sample((fs::path(args.out_dir) / name).string(), s);
      per_recording[i].push_back(SampleIndexEntry{name, s.label, s.subject, stem, s.segment_index});
    }
  });

  std::vector<SampleIndexEntry> index;
  for (const auto& chunk : per_recording) {
    index.insert(index.end(), chunk.begin(), chunk.end());
  }
  std::string index_path = (fs::path(args.out_dir) / "index.csv").string();
  write_sample_index(index_path, index);
  std::cout << "wrote " << index.size() << " samples to " << args.out_dir << " ("
            << skipped.load() << " recordings skipped), index at " << index_path << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------

struct LoadedData {
  std::vector<Sample> train, val, test;
  InputGeometry geom;
};

LoadedData load_and_split(const std::string& index_path, const Config& cfg) {
  auto index = read_sample_index(index_path);
  if (index.empty()) throw FormatError(index_path + ": empty sample index");
  for (auto& e : index) e.path = resolve(index_path, e.path);
  std::vector<Sample> samples = load_samples(index);

  std::vector<int> subjects, labels;
  for (const Sample& s : samples) {
    subjects.push_back(s.subject);
    labels.push_back(s.label);
  }
  SplitSpec split = split_spec_from(cfg);
  ModelHyper hyper = model_hyper_from(cfg);
  SplitResult r = split_by_subject(subjects, labels, static_cast<int>(hyper.n_classes),
                                   split.train_subjects, split.val_subjects, split.test_subjects);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";

  LoadedData data;
  for (size_t i : r.train) data.train.push_back(samples[i]);
  for (size_t i : r.val) data.val.push_back(samples[i]);
  for (size_t i : r.test) data.test.push_back(samples[i]);

  const Shape& s = samples[0].data.shape();
  if (s.size() != 4) throw FormatError("samples must have shape (2,N,R,W), got " + shape_str(s));
  data.geom = InputGeometry{s[0], s[1], s[2], s[3]};
  return data;
}

struct TrainArgs {
  std::string index_path, config_path, method = "scae";
  std::string out_checkpoint = "model.spkc";
  std::string report_path;
  int64_t seed = -1;
  int repeat = 1;
  int64_t timesteps = 0;
};

int cmd_train(const TrainArgs& args) {
  Config cfg = load_config(args.config_path);
  Method method = parse_method(args.method);
  TrainConfig tc = train_config_from(cfg);
  ModelHyper hyper = model_hyper_from(cfg);
  if (args.seed >= 0) tc.seed = static_cast<uint64_t>(args.seed);
  if (args.timesteps > 0) hyper.t_cls = args.timesteps;
  if (args.repeat < 1) throw ConfigError("repeat must be >= 1");
  validate_train_config(tc, hyper.n_classes);

  LoadedData data = load_and_split(args.index_path, cfg);
  std::cout << "train/val/test: " << data.train.size() << "/" << data.val.size() << "/"
            << data.test.size() << ", geometry (" << data.geom.channels << "," << data.geom.n
            << "," << data.geom.r << "," << data.geom.w << ")\n";

  json runs = json::array();
  std::vector<double> test_f1s;
  double best_val = -1.0;

  for (int rep = 0; rep < args.repeat; ++rep) {
    uint64_t run_seed = tc.seed + static_cast<uint64_t>(rep);
    TrainConfig run_cfg = tc;
    run_cfg.seed = run_seed;
    ModelBundle model = make_model(method, data.geom, hyper, run_seed);
    ParamCount pc = count_params(model.params());
    if (rep == 0) {
      std::cout << "method " << method_name(method) << ": " << pc.trainable
                << " trainable parameters (+" << pc.frozen << " frozen)\n";
    }
    TrainReport report = fit(model, data.train, data.val, run_cfg);
    double test_f1 = evaluate_macro_f1(model, data.test, run_cfg.batch_size);
    test_f1s.push_back(test_f1);

    json epochs = json::array();
    for (const EpochStat& e : report.epochs) {
      epochs.push_back({{"train_loss", e.train_loss}, {"val_f1", e.val_f1}});
    }
    runs.push_back({{"seed", run_seed},
                    {"best_epoch", report.best_epoch},
                    {"stop_epoch", report.stop_epoch},
                    {"best_val_f1", report.best_val_f1},
                    {"test_f1", test_f1},
                    {"wall_seconds", report.wall_seconds},
                    {"epochs", epochs}});
    std::cout << "run " << rep << " (seed " << run_seed << "): best val F1 " << report.best_val_f1
              << " @ epoch " << report.best_epoch << ", test F1 " << test_f1 << ", "
              << report.wall_seconds << " s\n";

    if (report.best_val_f1 > best_val) {
      best_val = report.best_val_f1;
      save_bundle(args.out_checkpoint, model);
    }
  }

  std::cout << "test F1 " << mean_of(test_f1s) << " +- " << std_of(test_f1s) << " over "
            << args.repeat << " run(s); checkpoint: " << args.out_checkpoint << "\n";

  if (!args.report_path.empty()) {
    json config_echo = json::object();
    for (const auto& [k, v] : cfg.entries()) config_echo[k] = v;
    json report = {{"method", method_name(method)},
                   {"seed", tc.seed},
                   {"repeat", args.repeat},
                   {"test_f1_mean", mean_of(test_f1s)},
                   {"test_f1_std", std_of(test_f1s)},
                   {"checkpoint", args.out_checkpoint},
                   {"config", config_echo},
                   {"runs", runs}};
    std::ofstream out(args.report_path, std::ios::trunc);
    if (!out) throw FormatError(args.report_path + ": cannot open for writing");
    out << report.dump(2) << "\n";
    std::cout << "report: " << args.report_path << "\n";
  }
  return 0;
}

// ---- benchmark --------------------------------------------------------------

struct BenchmarkArgs {
  std::string index_path, config_path, out_path = "benchmark.csv";
  std::vector<std::string> checkpoints;
  std::string sweep;        // comma-separated timestep list
  std::string sweep_out = "sweep.csv";
  int repeats = 10;
};

struct MethodRow {
  std::vector<double> f1, enc_ms, cls_ms, spike_rate, sparsity;
  int64_t params = 0;
  bool has_sparsity = false;
};

int cmd_benchmark(const BenchmarkArgs& args) {
  Config cfg = load_config(args.config_path);
  if (args.checkpoints.empty()) throw ConfigError("benchmark needs at least one checkpoint");
  LoadedData data = load_and_split(args.index_path, cfg);
  if (data.test.empty()) throw ContractError("benchmark: test split is empty");
  const std::vector<Sample>& test = data.test;

  std::vector<int> truths;
  for (const Sample& s : test) truths.push_back(s.label);

  std::map<std::string, MethodRow> rows;
  std::vector<int64_t> sweep_steps;
  if (!args.sweep.empty()) {
    for (int64_t t : Config::from_string("t=" + args.sweep).get_int_list("t", {})) {
      if (t < 1) throw ConfigError("sweep timesteps must be >= 1");
      sweep_steps.push_back(t);
    }
  }
  // sweep rows: per (method, T): f1 samples and time samples across checkpoints
  std::map<std::pair<std::string, int64_t>, std::pair<std::vector<double>, std::vector<double>>> sweep_rows;

  for (const std::string& ckpt_path : args.checkpoints) {
    ModelBundle model = load_bundle(ckpt_path);
    if (model.geom.channels != data.geom.channels || model.geom.n != data.geom.n ||
        model.geom.r != data.geom.r || model.geom.w != data.geom.w) {
      throw FormatError(ckpt_path + ": checkpoint geometry does not match the sample index");
    }
    std::string name = method_name(model.method);
    MethodRow& row = rows[name];

    ModelTrace trace;
    std::vector<int> preds = predict(model, test, 8, 0, &trace);
    row.f1.push_back(macro_f1(preds, truths, static_cast<int>(model.hyper.n_classes)));
    row.spike_rate.push_back(spike_rate_pct(trace));
    row.params = count_params(model.params()).trainable;

    // predictions CSV: per-sample counts and decoded labels
    {
      fs::path pred_path = fs::path(args.out_path).parent_path() /
                           (fs::path(ckpt_path).stem().string() + ".predictions.csv");
      std::ofstream pred(pred_path.string(), std::ios::trunc);
      if (!pred) throw FormatError(pred_path.string() + ": cannot open for writing");
      pred << "sample";
      for (int64_t c = 0; c < model.hyper.n_classes; ++c) pred << ",count" << c;
      pred << ",predicted,true\n";
      std::vector<Sample> prepared = prepare_inputs(model.method, test);
      for (size_t i = 0; i < prepared.size(); ++i) {
        Batch b = make_batch(prepared, {i});
        Tape tape;
        ForwardOut fwd = bundle_forward(model, tape, b, BnMode::Eval);
        pred << prepared[i].recording_id << "#" << prepared[i].segment_index;
        for (int64_t c = 0; c < model.hyper.n_classes; ++c) {
          pred << "," << fwd.counts.value()[c];
        }
        pred << "," << rate_decode_batch(fwd.counts.value())[0] << "," << prepared[i].label << "\n";
      }
    }

    // timing: encode and classify one sample, mean over repeats
    Batch raw_one = make_batch(test, {0});
    Tensor head_input = raw_one.data;  // direct methods take the raw sample
    double enc_ms = 0.0;
    if (model.method == Method::Scae) {
      auto fn = [&] {
        Tape tape;
        model.scae->encode(tape.constant(raw_one.data), BnMode::Eval);
        model.scae->reset_state();
      };
      fn();
      enc_ms = time_inference_ms(fn, args.repeats);
      SpikeTrain enc = scae_encode(*model.scae, test[0]);
      head_input = make_batch({Sample{enc.values, 0, 0, "", 0}}, {0}).data;
    } else if (model.method == Method::Cae) {
      auto fn = [&] {
        Tape tape;
        model.cae->encode(tape.constant(raw_one.data), BnMode::Eval);
      };
      fn();
      enc_ms = time_inference_ms(fn, args.repeats);
      SpikeTrain enc = cae_encode(*model.cae, test[0]);
      head_input = make_batch({Sample{enc.values, 0, 0, "", 0}}, {0}).data;
    } else if (model.method == Method::Delta) {
      auto fn = [&] { delta_encode_sample(test[0].data); };
      fn();
      enc_ms = time_inference_ms(fn, args.repeats);
      head_input = make_batch({Sample{delta_encode_sample(test[0].data).values, 0, 0, "", 0}}, {0}).data;
    }
    row.enc_ms.push_back(enc_ms);

    auto classify = [&](int64_t steps) {
      if (model.classifier) {
        Tape tape;
        model.classifier->forward_counts(tape.constant(head_input), steps);
      } else {
        Tape tape;
        model.direct->forward_counts(tape.constant(head_input), steps);
      }
    };
    classify(0);
    row.cls_ms.push_back(time_inference_ms([&] { classify(0); }, args.repeats));

    if (model.method == Method::Scae || model.method == Method::Cae || model.method == Method::Delta) {
      double acc = 0.0;
      for (const Sample& s : test) {
        SpikeTrain train;
        if (model.method == Method::Scae) {
          train = scae_encode(*model.scae, s);
        } else if (model.method == Method::Cae) {
          train = cae_encode(*model.cae, s);
        } else {
          train = delta_encode_sample(s.data);
        }
        acc += train.sparsity();
      }
      row.sparsity.push_back(acc / static_cast<double>(test.size()));
      row.has_sparsity = true;
    }

    for (int64_t t : sweep_steps) {
      double f1_t = evaluate_macro_f1(model, test, 8, t);
      classify(t);
      double ms_t = time_inference_ms([&] { classify(t); }, args.repeats);
      auto& cell = sweep_rows[{name, t}];
      cell.first.push_back(f1_t);
      cell.second.push_back(ms_t);
    }
  }

  std::ofstream out(args.out_path, std::ios::trunc);
  if (!out) throw FormatError(args.out_path + ": cannot open for writing");
  out << "method,f1_mean,f1_std,params,enc_ms,cls_ms,spike_rate_pct,sparsity_pct\n";
  for (const auto& [name, row] : rows) {
    out << name << "," << mean_of(row.f1) << "," << std_of(row.f1) << "," << row.params << ","
        << mean_of(row.enc_ms) << "," << mean_of(row.cls_ms) << "," << mean_of(row.spike_rate)
        << ",";
    if (row.has_sparsity) out << 100.0 * mean_of(row.sparsity);
    out << "\n";
  }
  out.close();
  std::cout << "benchmark table: " << args.out_path << "\n";

  if (!sweep_steps.empty()) {
    std::ofstream sw(args.sweep_out, std::ios::trunc);
    if (!sw) throw FormatError(args.sweep_out + ": cannot open for writing");
    sw << "method,t_cls,f1_mean,f1_std,cls_ms_mean\n";
    for (const auto& [key, cell] : sweep_rows) {
      sw << key.first << "," << key.second << "," << mean_of(cell.first) << ","
         << std_of(cell.first) << "," << mean_of(cell.second) << "\n";
    }
    std::cout << "timestep sweep: " << args.sweep_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spike-encoded channel-response activity recognition pipeline"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic CIR corpus with a manifest");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();
  synth->add_option("--config", synth_args.config_path, "run configuration file");
  synth->add_option("--count-per-class", synth_args.count_per_class, "recordings per class");
  synth->add_option("--subjects", synth_args.subjects, "number of synthetic subjects");
  synth->add_option("--seed", synth_args.seed, "generator seed override");
  synth->add_option("--jobs", synth_args.jobs, "worker cap");

  PreprocessArgs pre_args;
  auto* pre = app.add_subcommand("preprocess", "turn a corpus into normalized model-ready samples");
  pre->add_option("--manifest", pre_args.manifest_path, "corpus manifest CSV")->required();
  pre->add_option("--out", pre_args.out_dir, "output directory")->required();
  pre->add_option("--config", pre_args.config_path, "run configuration file");
  pre->add_option("--jobs", pre_args.jobs, "worker cap");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train an encoder+classifier and write a checkpoint");
  train->add_option("--index", train_args.index_path, "sample index CSV")->required();
  train->add_option("--method", train_args.method, "scae|cae|delta|direct-lin|direct-conv")->required();
  train->add_option("--config", train_args.config_path, "run configuration file");
  train->add_option("--out", train_args.out_checkpoint, "checkpoint output path");
  train->add_option("--report", train_args.report_path, "JSON training report path");
  train->add_option("--seed", train_args.seed, "training seed override");
  train->add_option("--repeat", train_args.repeat, "weight-initialization repeats (mean +- std)");
  train->add_option("--timesteps", train_args.timesteps, "classifier timestep override");

  BenchmarkArgs bench_args;
  auto* bench = app.add_subcommand("benchmark", "evaluate checkpoints into a comparison table");
  bench->add_option("--index", bench_args.index_path, "sample index CSV")->required();
  bench->add_option("--checkpoints", bench_args.checkpoints, "checkpoint files")->required()->expected(-1);
  bench->add_option("--config", bench_args.config_path, "run configuration file");
  bench->add_option("--out", bench_args.out_path, "benchmark table CSV path");
  bench->add_option("--timesteps", bench_args.sweep, "comma-separated sweep timesteps");
  bench->add_option("--sweep-out", bench_args.sweep_out, "sweep CSV path");
  bench->add_option("--repeats", bench_args.repeats, "timing repeats");

  try {
    app.parse(argc, argv);
    if (*synth) return cmd_synth(synth_args);
    if (*pre) return cmd_preprocess(pre_args);
    if (*train) return cmd_train(train_args);
    if (*bench) return cmd_benchmark(bench_args);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
