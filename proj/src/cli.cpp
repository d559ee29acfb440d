#include "arena/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "arena/metrics.hpp"
#include "arena/orchestrator.hpp"

namespace arena::cli {

namespace {

namespace fs = std::filesystem;
using orchestrator::ExperimentConfig;

struct Failure {
  int code;
  std::string message;
};

std::string terms_text(const Terms& t) {
  if (const auto* s = std::get_if<UltimatumSplit>(&t)) return "split_to_p2=" + std::to_string(s->to_p2);
  if (const auto* p = std::get_if<Price>(&t)) return "price=" + std::to_string(p->coins);
  const auto& o = std::get<TradeOffer>(t);
  return "give=" + protocol::format_bundle(o.give) + " receive=" + protocol::format_bundle(o.receive);
}

std::string action_text(const Action& a) {
  if (const auto* p = std::get_if<Propose>(&a)) return "propose " + terms_text(p->terms);
  if (is_accept(a)) return "accept";
  return std::get<Reject>(a).final ? "reject (final)" : "reject";
}

std::string indent(const std::string& text, const std::string& prefix) {
  std::string out = prefix;
  for (char c : text) {
    out += c;
    if (c == '\n') out += prefix;
  }
  return out;
}

std::string agent_text(const agents::AgentSpec& a) {
  if (const auto* s = std::get_if<agents::ScriptedSpec>(&a.kind)) return a.label + " (scripted " + s->strategy + ")";
  return a.label + " (" + std::get<agents::LlmSpec>(a.kind).model_id + ")";
}

std::vector<runlog::RunRecord> load_records(const std::string& path) {
  if (!fs::exists(path)) throw Failure{kStorage, "run log " + path + " does not exist"};
  try {
    // Log order depends on worker scheduling; sort so summaries do not.
    auto records = runlog::read_run_log(path);
    std::stable_sort(records.begin(), records.end(), [](const runlog::RunRecord& a, const runlog::RunRecord& b) {
      return a.spec.run_id < b.spec.run_id;
    });
    return records;
  } catch (const runlog::RecordError& e) {
    throw Failure{kUsage, "malformed run log " + path + ": " + e.what()};
  } catch (const runlog::StorageError& e) {
    throw Failure{kStorage, e.what()};
  }
}

std::shared_ptr<gateway::Clock> pick_clock(const CliEnv& env, bool fixed) {
  if (env.clock) return env.clock;
  if (fixed) return std::make_shared<gateway::FrozenClock>();
  return gateway::system_clock();
}

ExperimentConfig load(const std::string& path) {
  try {
    return orchestrator::load_config(path);
  } catch (const orchestrator::ConfigError& e) {
    throw Failure{kUsage, std::string("config error: ") + e.what()};
  }
}

struct RunFlags {
  std::string config;
  std::string out;
  std::optional<std::string> mock;
  bool mock_flag = false;
  bool fixed_clock = false;
  int concurrency = 0;
};

int do_run(const RunFlags& f, bool resume, std::ostream& out, std::ostream& err, const CliEnv& env) {
  const auto config = load(f.config);
  if (!resume && fs::exists(f.out) && fs::file_size(f.out) > 0) {
    throw Failure{kUsage, "run log " + f.out + " already has records; use `arena resume` to continue it"};
  }
  std::optional<fs::path> mock_dir;
  if (f.mock_flag) {
    if (f.mock && !f.mock->empty()) {
      mock_dir = *f.mock;
    } else if (config.mock_fixtures) {
      mock_dir = *config.mock_fixtures;
    } else {
      throw Failure{kUsage, "--mock needs a fixture directory (flag value or config mock_fixtures)"};
    }
  }
  auto clock = pick_clock(env, f.fixed_clock);
  gateway::GatewayOptions gopts;
  gopts.log = [&err](const std::string& line) { err << line << "\n"; };
  auto gw = orchestrator::build_gateway(config, mock_dir, env.env, clock, gopts);
  if (config.uses_llm()) {
    const auto unroutable = orchestrator::unroutable_models(config, *gw);
    if (!unroutable.empty()) throw Failure{kUsage, "config error: " + unroutable.front()};
    if (!mock_dir) {
      const auto missing = orchestrator::missing_credentials(config, *gw);
      if (!missing.empty()) {
        std::string msg = "missing provider credentials:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw Failure{kAuth, msg + "\n(use --mock <fixtures> to run without providers)"};
      }
    }
  }

  const auto specs = orchestrator::expand_matrix(config);
  std::unique_ptr<runlog::RunLog> log;
  try {
    log = std::make_unique<runlog::RunLog>(f.out);
  } catch (const runlog::StorageError& e) {
    throw Failure{kStorage, e.what()};
  }

  orchestrator::ExecutionContext ctx{gw.get(), clock};
  orchestrator::ExecuteOptions opts;
  opts.concurrency = f.concurrency > 0 ? f.concurrency : config.concurrency;
  int infra = 0;
  bool auth_failure = false;
  opts.on_record = [&](const runlog::RunRecord& r) {
    if (r.failure && r.failure->failure_class == runlog::FailureClass::Infrastructure) {
      ++infra;
      if (r.failure->reason.find("AuthError") != std::string::npos) auth_failure = true;
    }
  };
  orchestrator::ExecuteSummary summary;
  try {
    summary = orchestrator::execute_all(specs, *log, ctx, opts);
  } catch (const runlog::StorageError& e) {
    throw Failure{kStorage, e.what()};
  }
  out << "runs: " << specs.size() << " planned, " << summary.completed << " completed, " << summary.skipped
      << " already in log, " << summary.failed << " protocol failures (" << infra << " infrastructure)\n";
  out << "log: " << f.out << "\n";
  if (auth_failure) {
    err << "provider rejected the credentials; see the failure reasons in the log\n";
    return kAuth;
  }
  return kOk;
}

int do_validate(const std::string& config_path, const std::string& log_path, std::ostream& out) {
  if (config_path.empty() && log_path.empty()) throw Failure{kUsage, "validate needs --config or --log"};
  if (!config_path.empty()) {
    const auto config = load(config_path);
    const auto specs = orchestrator::expand_matrix(config);
    out << "config ok: " << config.models.size() << " models, " << orchestrator::model_pairs(config).size()
        << " ordered pairs, " << specs.size() << " runs\n";
  }
  if (!log_path.empty()) {
    if (!fs::exists(log_path)) throw Failure{kStorage, "run log " + log_path + " does not exist"};
    std::ifstream in(log_path, std::ios::binary);
    std::string line;
    int number = 0, good = 0;
    std::vector<std::string> problems;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        problems.push_back("line " + std::to_string(number) + ": not valid JSON");
        continue;
      }
      auto errors = runlog::validate_record_json(j);
      if (errors.empty() && !ids.insert(j["run_id"].get<std::string>()).second) errors.push_back("duplicate run_id");
      for (const auto& e : errors) problems.push_back("line " + std::to_string(number) + ": " + e);
      if (errors.empty()) ++good;
    }
    if (!problems.empty()) {
      std::string msg = "run log " + log_path + " has " + std::to_string(problems.size()) + " problem(s):";
      for (const auto& p : problems) msg += "\n  " + p;
      throw Failure{kUsage, msg};
    }
    out << "log ok: " << good << " records\n";
  }
  return kOk;
}

int do_replay(const std::string& log_path, const std::string& run_id, std::ostream& out) {
  const auto records = load_records(log_path);
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const runlog::RunRecord& r) { return r.spec.run_id == run_id; });
  if (it == records.end()) throw Failure{kUnknownRunId, "no run with id " + run_id + " in " + log_path};
  const auto& r = *it;
  out << "run " << r.spec.run_id << "  game=" << to_string(r.spec.game)
      << "  language=" << agents::to_string(r.spec.framing) << "  repetition=" << r.spec.repetition
      << "  seed=" << r.spec.seed << "\n";
  out << "Player1: " << agent_text(r.spec.agent_p1) << "\n";
  out << "Player2: " << agent_text(r.spec.agent_p2) << "\n";
  for (const auto& e : r.transcript) {
    out << "\nturn " << e.turn << "  " << to_string(e.message.speaker) << "  " << action_text(e.message.action) << "\n";
    for (std::size_t i = 0; i < e.failed_attempts.size(); ++i) {
      out << "  rejected attempt " << i + 1 << ":\n" << indent(e.failed_attempts[i], "    | ") << "\n";
    }
    out << indent(e.message.raw_text, "  | ") << "\n";
  }
  out << "\noutcome: " << games::to_string(r.outcome.kind);
  if (r.outcome.terms) out << "  terms " << terms_text(*r.outcome.terms);
  out << "  utilities [" << r.outcome.utilities.p1 << ", " << r.outcome.utilities.p2 << "]  rounds "
      << r.outcome.rounds_used << "\n";
  if (r.failure) {
    out << "failure: " << (r.failure->failure_class == runlog::FailureClass::Protocol ? "protocol" : "infrastructure")
        << " by " << to_string(r.failure->agent) << ": " << r.failure->reason << "\n";
    for (std::size_t i = 0; i < r.failure->attempts.size(); ++i) {
      out << "  attempt " << i + 1 << ":\n" << indent(r.failure->attempts[i], "    | ") << "\n";
    }
  }
  const auto divergences = orchestrator::replay_divergences(r);
  if (divergences.empty()) {
    out << "replay: consistent with the engine\n";
    return kOk;
  }
  for (const auto& d : divergences) out << "DIVERGENCE: " << d << "\n";
  return kDivergence;
}

std::vector<GameKind> games_to_show(const std::vector<runlog::RunRecord>& records, const std::string& game) {
  if (!game.empty()) {
    try {
      return {game_kind_from_string(game)};
    } catch (const std::invalid_argument&) {
      throw Failure{kUsage, "unknown game '" + game + "'"};
    }
  }
  std::vector<GameKind> kinds;
  for (auto k : {GameKind::Ultimatum, GameKind::BuySell, GameKind::ResourceExchange}) {
    if (std::any_of(records.begin(), records.end(), [&](const auto& r) { return r.spec.game == k; })) {
      kinds.push_back(k);
    }
  }
  return kinds;
}

void write_export(const std::string& path, const std::vector<runlog::RunRecord>& records,
                  const std::vector<GameKind>& kinds, const std::string& group_by, const std::string& format,
                  std::ostream& out) {
  metrics::ExportFormat fmt;
  try {
    fmt = metrics::export_format_from_string(format);
  } catch (const metrics::UnknownField& e) {
    throw Failure{kUsage, e.what()};
  }
  std::ostringstream buf;
  // Games have different columns, so CSV and grid blocks are separated by a
  // blank line, each with its own header.
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i > 0 && fmt != metrics::ExportFormat::StructuredRecords) buf << "\n";
    metrics::export_metrics(buf, kinds[i], records, group_by, fmt);
  }
  if (path == "-") {
    out << buf.str();
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Failure{kStorage, "cannot write " + path};
  f << buf.str();
  if (!f) throw Failure{kStorage, "write to " + path + " failed"};
}

int do_analyze(const std::string& log_path, const std::string& game, const std::string& group_by,
               const std::string& export_path, const std::string& format, std::ostream& out) {
  if (group_by != "language" && group_by != "pair") throw Failure{kUsage, "--group-by must be language or pair"};
  const auto records = load_records(log_path);
  if (records.empty()) throw Failure{kUsage, "no records in " + log_path};
  const auto kinds = games_to_show(records, game);
  bool any = false;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (metrics::filter_game(records, kinds[i]).empty()) continue;
    if (any) out << "\n";
    any = true;
    if (group_by == "language") {
      metrics::print_table(out, metrics::language_table(kinds[i], records));
      out << "\n";
      metrics::print_table(out, metrics::failure_table(kinds[i], records));
    } else {
      bool first = true;
      for (const auto& g : metrics::pair_grids(kinds[i], records)) {
        if (!first) out << "\n";
        first = false;
        metrics::print_grid(out, g);
      }
    }
  }
  if (!any) throw Failure{kUsage, "no records for game '" + game + "' in " + log_path};
  if (!export_path.empty()) write_export(export_path, records, kinds, group_by, format, out);
  return kOk;
}

int do_providers(const std::string& config_path, std::ostream& out, const CliEnv& env) {
  ExperimentConfig config;
  if (!config_path.empty()) config = load(config_path);
  auto gw = orchestrator::build_gateway(config, std::nullopt, env.env, pick_clock(env, true));
  for (const auto& p : gw->profiles()) {
    std::string prefixes;
    for (const auto& x : p.model_prefixes) prefixes += (prefixes.empty() ? "" : ",") + x;
    out << p.name << "  prefixes=" << prefixes << "  dialect=" << p.dialect.name << "  endpoint=" << p.endpoint_url
        << "  key=" << p.api_key_env << (gw->has_credentials(p) ? " (set)" : " (missing)")
        << "  max_in_flight=" << p.max_in_flight << "\n";
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnv& env) {
  CLI::App app{"Multi-agent negotiation arena", "arena"};
  app.require_subcommand(1, 1);

  RunFlags run_flags;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", run_flags.config, "experiment config (JSON)")->required();
    sub->add_option("--out", run_flags.out, "run log to write (JSONL)")->required();
    sub->add_option("--mock", run_flags.mock, "serve LLM calls from fixtures in this directory")->expected(0, 1);
    sub->add_flag("--fixed-clock", run_flags.fixed_clock, "freeze timestamps at the epoch");
    sub->add_option("--concurrency", run_flags.concurrency, "override config concurrency");
  };
  auto* run = app.add_subcommand("run", "execute an experiment matrix into a new run log");
  add_run_flags(run);
  auto* resume = app.add_subcommand("resume", "continue an interrupted run log");
  add_run_flags(resume);

  std::string config_path, log_path, run_id, game, group_by = "language", export_path, format = "csv",
                                                  out_path = "-";
  auto* validate = app.add_subcommand("validate", "check a config or a run log");
  validate->add_option("--config", config_path);
  validate->add_option("--log", log_path);

  auto* replay = app.add_subcommand("replay", "print one run and re-check it against the engine");
  replay->add_option("--log", log_path)->required();
  replay->add_option("--run-id", run_id)->required();

  auto* analyze = app.add_subcommand("analyze", "metric tables or model-pair grids");
  analyze->add_option("--log", log_path)->required();
  analyze->add_option("--game", game, "ultimatum, buysell or resource (default: all present)");
  analyze->add_option("--group-by", group_by, "language or pair");
  analyze->add_option("--export", export_path, "also write the aggregate to this file");
  analyze->add_option("--format", format, "csv, jsonl or heatmap");

  auto* exp = app.add_subcommand("export", "write aggregated metrics");
  exp->add_option("--log", log_path)->required();
  exp->add_option("--game", game);
  exp->add_option("--group-by", group_by, "language or pair");
  exp->add_option("--format", format, "csv, jsonl or heatmap");
  exp->add_option("--out", out_path, "output file, - for stdout");

  auto* providers = app.add_subcommand("providers", "list provider profiles and credential status");
  providers->add_option("--config", config_path);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  run_flags.mock_flag = (run->parsed() ? run : resume)->count("--mock") > 0;

  try {
    if (run->parsed()) return do_run(run_flags, false, out, err, env);
    if (resume->parsed()) return do_run(run_flags, true, out, err, env);
    if (validate->parsed()) return do_validate(config_path, log_path, out);
    if (replay->parsed()) return do_replay(log_path, run_id, out);
    if (analyze->parsed()) return do_analyze(log_path, game, group_by, export_path, format, out);
    if (exp->parsed()) {
      if (group_by != "language" && group_by != "pair") throw Failure{kUsage, "--group-by must be language or pair"};
      const auto records = load_records(log_path);
      if (records.empty()) throw Failure{kUsage, "no records in " + log_path};
      write_export(out_path, records, games_to_show(records, game), group_by, format, out);
      return kOk;
    }
    if (providers->parsed()) return do_providers(config_path, out, env);
  } catch (const Failure& f) {
    err << "arena: " << f.message << "\n";
    return f.code;
  } catch (const orchestrator::ConfigError& e) {
    err << "arena: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const runlog::StorageError& e) {
    err << "arena: " << e.what() << "\n";
    return kStorage;
  } catch (const metrics::EmptyInput& e) {
    err << "arena: " << e.what() << "\n";
    return kUsage;
  } catch (const gateway::GatewayError& e) {
    err << "arena: " << e.what() << "\n";
    return e.kind() == gateway::GatewayErrorKind::AuthError ? kAuth : kFailure;
  } catch (const std::exception& e) {
    err << "arena: internal error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace arena::cli
