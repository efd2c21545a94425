// Command-line front end: pretrain, finetune, transfer, eval, grad-check,
// gen-synth, hop-sweep.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eafm/eafm.hpp"

namespace {

using namespace eafm;
namespace fs = std::filesystem;

// Exit codes per error category; CLI11 usage errors keep their own codes.
int exit_code(const Error& e) {
  const std::string c = e.category();
  if (c == "config") return 2;
  if (c == "data") return 3;
  if (c == "contract") return 4;
  if (c == "numeric") return 5;
  return 1;
}

struct Options {
  TrainConfig cfg;
  std::size_t layers = 6;
  std::string ablation = "none";
  std::string direction = "g1_to_g2";
  std::string candidates = "test";
  bool no_inverses = false;
  bool no_fallback = false;
  std::string out;
  std::string dump_relgraph;

  std::string task_dir;
  std::uint64_t split_seed = 0;
  std::string model_in;
  std::string model_out;
  std::string split = "test";

  double tolerance = 1e-3;
  double epsilon = 1e-4;

  std::vector<int> hops{1, 2, 3, 4, 5};

  SynthSpec synth;
  double edge_drop = 0.0;
  std::string synth_out;
};

// Output sink: stdout always, `--out` file when given.
class Report {
 public:
  explicit Report(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw DataError("cannot write " + path);
    }
  }
  void emit(const std::string& text) {
    std::cout << text;
    if (file_.is_open()) file_ << text;
  }

 private:
  std::ofstream file_;
};

std::string config_echo(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg.to_metadata()) os << "config." << k << '=' << v << '\n';
  return os.str();
}

LoadedTask require_task(const Options& o) {
  if (o.task_dir.empty()) throw ConfigError("--task <dir> is required");
  return load_task(fs::path(o.task_dir), o.split_seed);
}

ModelParams<float> require_model(const Options& o) {
  if (o.model_in.empty()) throw ConfigError("--model <checkpoint> is required");
  return load_checkpoint(fs::path(o.model_in));
}

const SeedAlignment& eval_pairs(const AlignmentTask& t, const std::string& split) {
  if (split == "test") return t.test;
  if (split == "valid") return t.valid;
  if (split == "train") return t.train;
  throw ConfigError("unknown split '" + split + "'");
}

EvalOptions eval_options(const Options& o) {
  EvalOptions e;
  e.direction = parse_direction(o.direction);
  e.candidates = parse_candidate_mode(o.candidates);
  e.threads = o.cfg.threads;
  return e;
}

void maybe_dump_relgraph(const Options& o, const AlignmentTask& task) {
  if (o.dump_relgraph.empty()) return;
  const TaskContext ctx(task, task.train, o.cfg.encoder());
  std::ofstream os(o.dump_relgraph);
  if (!os) throw DataError("cannot write " + o.dump_relgraph);
  ctx.relation_graph().write_edge_list(os);
}

void print_epoch(const EpochLog& l) {
  std::cerr << "epoch=" << l.epoch << " loss=" << l.train_loss << " valid_mrr=" << l.valid_mrr
            << " seconds=" << l.seconds << '\n';
}

// Encoder settings travel with the checkpoint; flags given explicitly win.
void adopt_checkpoint(TrainConfig& cfg, const ModelParams<float>& model, const CLI::App& app) {
  TrainConfig from_ckpt = cfg;
  from_ckpt.apply_metadata(model.metadata);
  auto given = [&](const char* name) { return app.get_option(name)->count() > 0; };
  if (!given("--anchor-hop")) cfg.anchor_hop = from_ckpt.anchor_hop;
  if (!given("--ablation")) cfg.ablation = from_ckpt.ablation;
  if (!given("--no-anchor-fallback")) cfg.anchor_fallback = from_ckpt.anchor_fallback;
  if (!given("--fallback-cap")) cfg.fallback_cap = from_ckpt.fallback_cap;
  if (!given("--no-relgraph-inverses")) cfg.relgraph_include_inverses = from_ckpt.relgraph_include_inverses;
  const auto shape = model.shape();
  cfg.dim = shape.dim;
  cfg.rel_layers = shape.rel_layers;
  cfg.ent_layers = shape.ent_layers;
}

int run_train(Options& o, Report& report, std::optional<ModelParams<float>> init) {
  const LoadedTask loaded = require_task(o);
  maybe_dump_relgraph(o, loaded.task);
  report.emit(config_echo(o.cfg));
  auto result = train<float>(loaded.task, o.cfg, std::move(init), print_epoch);
  const TaskContext ctx(loaded.task, loaded.task.train, o.cfg.encoder());
  const auto eval = evaluate(result.params, ctx, loaded.task.test, eval_options(o));
  std::ostringstream os;
  os << "best_epoch=" << result.best_epoch << '\n'
     << "best_valid_mrr=" << result.best_valid_mrr << '\n'
     << "epochs_run=" << result.epochs.size() << '\n'
     << "train_seconds=" << result.seconds << '\n';
  report.emit(os.str() + format_metrics(eval));
  if (!o.model_out.empty()) {
    save_checkpoint(fs::path(o.model_out), result.params);
    std::cerr << "wrote " << o.model_out << '\n';
  }
  return 0;
}

int run_eval(Options& o, Report& report, const CLI::App& app, bool frozen_transfer) {
  const ModelParams<float> model = require_model(o);
  adopt_checkpoint(o.cfg, model, app);
  const LoadedTask loaded = require_task(o);
  maybe_dump_relgraph(o, loaded.task);
  report.emit(config_echo(o.cfg));
  const auto opts = eval_options(o);
  EvalReport r;
  if (frozen_transfer) {
    r = transfer(model, loaded.task, o.cfg, opts);
  } else {
    const TaskContext ctx(loaded.task, loaded.task.train, o.cfg.encoder());
    r = evaluate(model, ctx, eval_pairs(loaded.task, o.split), opts);
  }
  report.emit(format_metrics(r));
  return 0;
}

int run_grad_check(Options& o, Report& report) {
  const AlignmentTask task = o.task_dir.empty() ? canonical_tiny_task() : require_task(o).task;
  report.emit(config_echo(o.cfg));
  const auto r = gradient_check(task, o.cfg, o.epsilon, o.tolerance);
  std::ostringstream os;
  os.precision(6);
  os << std::scientific;
  for (const auto& g : r.groups) os << "group." << g.name << '=' << g.max_relative_error << '\n';
  os << "num_parameters=" << r.num_parameters << '\n'
     << "loss=" << r.loss << '\n'
     << "max_relative_error=" << r.max_relative_error << '\n'
     << "worst_group=" << r.worst_group() << '\n'
     << "tolerance=" << o.tolerance << '\n'
     << "seconds=" << r.seconds << '\n'
     << (r.passed() ? "PASS" : "FAIL") << '\n';
  report.emit(os.str());
  return r.passed() ? 0 : 1;
}

int run_gen_synth(Options& o, Report& report) {
  if (o.synth_out.empty()) throw ConfigError("--out-dir <dir> is required");
  o.synth.drop_first = o.synth.drop_second = o.edge_drop;
  const SyntheticTask st = generate_synthetic(o.synth);
  write_task(fs::path(o.synth_out), with_default_names(st.task));
  std::ostringstream os;
  os << "entities=" << st.task.g1.num_entities() << '\n'
     << "triples_1=" << st.task.g1.num_original_triples() << '\n'
     << "triples_2=" << st.task.g2.num_original_triples() << '\n'
     << "train_pairs=" << st.task.train.size() << '\n'
     << "valid_pairs=" << st.task.valid.size() << '\n'
     << "test_pairs=" << st.task.test.size() << '\n'
     << "out_dir=" << o.synth_out << '\n';
  report.emit(os.str());
  return 0;
}

int run_hop_sweep(Options& o, Report& report, const CLI::App& app) {
  std::optional<ModelParams<float>> frozen;
  if (!o.model_in.empty()) {
    frozen = load_checkpoint(fs::path(o.model_in));
    adopt_checkpoint(o.cfg, *frozen, app);
  }
  const LoadedTask loaded = require_task(o);
  report.emit(config_echo(o.cfg));
  const auto rows = hop_sweep<float>(loaded.task, o.cfg, o.hops, eval_options(o),
                                     frozen ? &*frozen : nullptr, print_epoch);
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  for (const auto& row : rows) {
    const Metrics& m = row.report.reported;
    os << "k=" << row.k << " mrr=" << m.mrr << " hits@1=" << m.hits_at(1) << " hits@10=" << m.hits_at(10)
       << " num_degenerate=" << m.num_degenerate << " best_epoch=" << row.best_epoch << '\n';
  }
  report.emit(os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Structure-only entity alignment: pretraining, transfer and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value config file; command-line flags override it");

  auto& c = o.cfg;
  app.add_option("--dim", c.dim, "Hidden dimension")->capture_default_str();
  auto* layers = app.add_option("--layers", o.layers, "Layers for both encoders")->capture_default_str();
  auto* rel_layers = app.add_option("--rel-layers", c.rel_layers, "Relation encoder layers");
  auto* ent_layers = app.add_option("--ent-layers", c.ent_layers, "Entity encoder layers");
  layers->excludes(rel_layers)->excludes(ent_layers);
  app.add_option("--anchor-hop", c.anchor_hop, "Anchor activation hop count k")->capture_default_str();
  app.add_option("--lr", c.lr, "Learning rate")->capture_default_str();
  app.add_option("--batch-size", c.batch_size, "Seed pairs per batch")->capture_default_str();
  app.add_option("--epochs", c.max_epochs, "Maximum epochs")->capture_default_str();
  app.add_option("--patience", c.patience, "Early-stopping patience in epochs")->capture_default_str();
  app.add_option("--weight-decay", c.weight_decay, "Decoupled weight decay")->capture_default_str();
  app.add_option("--seed", c.seed, "Model/optimizer seed")->capture_default_str();
  app.add_option("--ablation", o.ablation, "none | no_relgraph | no_parallel | no_interaction")
      ->capture_default_str();
  app.add_option("--negatives", c.negatives, "Sampled negatives per query (0 = full softmax)")
      ->capture_default_str();
  app.add_option("--direction", o.direction, "g1_to_g2 | g2_to_g1 | mean")->capture_default_str();
  app.add_option("--candidates", o.candidates, "test | all")->capture_default_str();
  app.add_flag("--no-relgraph-inverses", o.no_inverses, "Drop INV edges from the relation graph");
  app.add_flag("--no-anchor-fallback", o.no_fallback, "Disable hop expansion when no anchor is in range");
  app.add_option("--fallback-cap", c.fallback_cap, "Largest hop tried by the fallback")->capture_default_str();
  app.add_option("--valid-cap", c.valid_cap, "Validation pairs and candidate pool size per epoch")->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--out", o.out, "Also write metrics to this file");
  app.add_option("--dump-relgraph", o.dump_relgraph, "Write the relation graph edge list to this file");

  auto add_task = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--task", o.task_dir, "Dataset directory (OpenEA layout)");
    if (required) opt->required();
    sub->add_option("--split-seed", o.split_seed, "Seed for the 20/10/70 split when links are not pre-split")
        ->capture_default_str();
  };

  auto* pretrain = app.add_subcommand("pretrain", "Train from scratch on one task");
  add_task(pretrain, true);
  pretrain->add_option("--model-out", o.model_out, "Checkpoint to write");

  auto* finetune = app.add_subcommand("finetune", "Continue training a checkpoint on a task");
  add_task(finetune, true);
  finetune->add_option("--model", o.model_in, "Checkpoint to start from")->required();
  finetune->add_option("--model-out", o.model_out, "Checkpoint to write");

  auto* transfer_cmd = app.add_subcommand("transfer", "Frozen zero-shot evaluation on a task's test pairs");
  add_task(transfer_cmd, true);
  transfer_cmd->add_option("--model", o.model_in, "Checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_task(eval_cmd, true);
  eval_cmd->add_option("--model", o.model_in, "Checkpoint")->required();
  eval_cmd->add_option("--split", o.split, "train | valid | test")->capture_default_str();

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  add_task(grad, false);
  grad->add_option("--tolerance", o.tolerance, "Max relative error")->capture_default_str();
  grad->add_option("--epsilon", o.epsilon, "Central-difference step")->capture_default_str();

  auto* synth = app.add_subcommand("gen-synth", "Write a synthetic KG pair with known alignment");
  synth->add_option("--out-dir", o.synth_out, "Output directory")->required();
  synth->add_option("--entities", o.synth.num_entities)->capture_default_str();
  synth->add_option("--relations", o.synth.num_relations)->capture_default_str();
  synth->add_option("--avg-degree", o.synth.avg_degree)->capture_default_str();
  synth->add_option("--edge-drop", o.edge_drop, "Per-side triple drop rate")->capture_default_str();
  synth->add_flag("--relation-renaming", o.synth.relation_renaming, "Fresh relation vocabulary for KG2");
  synth->add_option("--seed-fraction", o.synth.seed_fraction)->capture_default_str();
  synth->add_option("--synth-seed", o.synth.seed)->capture_default_str();

  auto* sweep = app.add_subcommand("hop-sweep", "Train (or transfer) once per anchor hop value");
  add_task(sweep, true);
  sweep->add_option("--k", o.hops, "Hop values")->capture_default_str();
  sweep->add_option("--model", o.model_in, "Frozen checkpoint; omit to train per k");

  // grad-check runs on a small model unless told otherwise.
  const bool is_grad_check = std::any_of(argv + 1, argv + argc, [](const char* a) { return std::string(a) == "grad-check"; });
  if (is_grad_check) {
    c.dim = 4;
    o.layers = 2;
    c.seed = 9;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (layers->count() > 0 || (rel_layers->count() == 0 && ent_layers->count() == 0)) {
      c.rel_layers = c.ent_layers = o.layers;
    } else if (rel_layers->count() == 0 || ent_layers->count() == 0) {
      throw ConfigError("--rel-layers and --ent-layers must be given together");
    }
    c.ablation = parse_ablation(o.ablation);
    c.relgraph_include_inverses = !o.no_inverses;
    c.anchor_fallback = !o.no_fallback;
    parse_direction(o.direction);
    parse_candidate_mode(o.candidates);
    c.validate();

    Report report(o.out);
    if (pretrain->parsed()) return run_train(o, report, std::nullopt);
    if (finetune->parsed()) {
      auto init = require_model(o);
      adopt_checkpoint(c, init, app);
      return run_train(o, report, std::move(init));
    }
    if (transfer_cmd->parsed()) return run_eval(o, report, app, true);
    if (eval_cmd->parsed()) return run_eval(o, report, app, false);
    if (grad->parsed()) return run_grad_check(o, report);
    if (synth->parsed()) return run_gen_synth(o, report);
    if (sweep->parsed()) return run_hop_sweep(o, report, app);
  } catch (const Error& e) {
    std::cerr << "error [" << e.category() << "]: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
