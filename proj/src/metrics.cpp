#include "arena/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

namespace arena::metrics {

namespace {

using games::OutcomeKind;

bool counted(const RunRecord& r) { return r.outcome.kind != OutcomeKind::ProtocolFailure; }

GroupAccumulator accumulate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw EmptyInput("no records");
  const GameKind kind = records.front().spec.game;
  GroupAccumulator acc;
  for (const auto& r : records) {
    if (r.spec.game != kind) throw MixedGames("records mix game kinds");
    acc.add(r);
  }
  return acc;
}

MetricSummary non_empty(const Accumulator& a, const char* what) {
  if (a.count() == 0) throw EmptyInput(std::string("no records with ") + what);
  return a.summary();
}

int language_rank(agents::LanguageFraming f) { return f == agents::LanguageFraming::English ? 0 : 1; }

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

// One metric column of a game's table.
struct Column {
  std::string display;
  std::string id;
  bool is_rate = false;
  std::function<Rate(const GroupAccumulator&)> rate;
  std::function<const Accumulator&(const GroupAccumulator&)> summary;
};

Column rate_col(std::string display, std::string id, std::function<Rate(const GroupAccumulator&)> f) {
  return {std::move(display), std::move(id), true, std::move(f), {}};
}

Column sum_col(std::string display, std::string id, std::function<const Accumulator&(const GroupAccumulator&)> f) {
  return {std::move(display), std::move(id), false, {}, std::move(f)};
}

std::vector<Column> columns_for(GameKind game) {
  auto acceptance = rate_col("Acceptance Rate", "acceptance_rate", [](const auto& g) { return g.acceptance(); });
  auto wins = rate_col("P1 Win Rate", "win_rate_p1", [](const auto& g) { return g.wins(); });
  auto rounds = sum_col("Conversation Rounds", "rounds", [](const auto& g) -> const Accumulator& { return g.rounds; });
  auto p1 = sum_col("P1 Payoff", "payoff_p1", [](const auto& g) -> const Accumulator& { return g.payoff_p1; });
  auto p2 = sum_col("P2 Payoff", "payoff_p2", [](const auto& g) -> const Accumulator& { return g.payoff_p2; });
  switch (game) {
    case GameKind::Ultimatum:
      return {acceptance,
              sum_col("Initial Offer", "initial_offer",
                      [](const auto& g) -> const Accumulator& { return g.initial_offer; }),
              p1, p2, wins, rounds};
    case GameKind::BuySell: {
      auto bs_wins = wins;
      bs_wins.display = "Player 1 Win Rate";
      return {acceptance,
              sum_col("Seller Advantage", "seller_advantage",
                      [](const auto& g) -> const Accumulator& { return g.seller_adv; }),
              sum_col("Buyer Advantage", "buyer_advantage",
                      [](const auto& g) -> const Accumulator& { return g.buyer_adv; }),
              rounds, bs_wins};
    }
    case GameKind::ResourceExchange: {
      auto rx_acceptance = acceptance;
      rx_acceptance.display = "Acceptance Rate (%)";
      auto rx_wins = wins;
      rx_wins.display = "P1 Win Rate (%)";
      return {rx_acceptance,
              sum_col("Trade Volume", "trade_volume",
                      [](const auto& g) -> const Accumulator& { return g.trade_volume; }),
              p1, p2, rx_wins, rounds};
    }
  }
  return {};
}

std::string rate_cell(const Rate& r) {
  if (r.trials == 0) return "n/a";
  return fixed2(100.0 * r.value()) + "% ± " + fixed2(100.0 * r.binomial_std()) + "%";
}

std::string summary_cell(const Accumulator& a) {
  if (a.count() == 0) return "n/a";
  const auto s = a.summary();
  return fixed2(s.mean) + " ± " + fixed2(s.std);
}

std::string cell(const Column& c, const GroupAccumulator& g) {
  return c.is_rate ? rate_cell(c.rate(g)) : summary_cell(c.summary(g));
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> key_fields_for(const std::string& group_by) {
  if (group_by == "language") return {"language"};
  if (group_by == "pair") return {"language", "pair"};
  throw UnknownField("unknown grouping '" + group_by + "' (expected language or pair)");
}

std::optional<double> grid_value(const std::string& metric, const GroupAccumulator& g) {
  auto mean_of = [](const Accumulator& a) -> std::optional<double> {
    if (a.count() == 0) return std::nullopt;
    return a.mean();
  };
  if (metric == "P1 Win Rate") {
    const auto w = g.wins();
    if (w.trials == 0) return std::nullopt;
    return 100.0 * w.value();
  }
  if (metric == "P1 Payoff") return mean_of(g.payoff_p1);
  if (metric == "P2 Payoff") return mean_of(g.payoff_p2);
  if (metric == "Seller Advantage") return mean_of(g.seller_adv);
  if (metric == "Buyer Advantage") return mean_of(g.buyer_adv);
  throw UnknownField("unknown grid metric '" + metric + "'");
}

}  // namespace

void Accumulator::add(double x) {
  ++n_;
  sum_ += x;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void Accumulator::merge(const Accumulator& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double n = static_cast<double>(n_ + o.n_);
  const double delta = o.mean_ - mean_;
  mean_ += delta * static_cast<double>(o.n_) / n;
  m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
  n_ += o.n_;
  sum_ += o.sum_;
}

MetricSummary Accumulator::summary() const {
  if (n_ == 0) return {};
  return {mean(), std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_))), n_};
}

double Rate::binomial_std() const {
  const double p = value();
  return std::sqrt(std::max(0.0, p * (1.0 - p)));
}

double Rate::standard_error() const {
  if (trials == 0) return 0.0;
  return binomial_std() / std::sqrt(static_cast<double>(trials));
}

void GroupAccumulator::add(const RunRecord& r) {
  ++records;
  if (!counted(r)) {
    ++failures;
    return;
  }
  switch (r.outcome.kind) {
    case OutcomeKind::Agreement: ++agreements; break;
    case OutcomeKind::Rejection: ++rejections; break;
    default: ++timeouts; break;
  }
  switch (games::outcome_winner(r.outcome, r.spec.game)) {
    case games::Winner::Player1: ++p1_wins; break;
    case games::Winner::Player2: ++p2_wins; break;
    case games::Winner::Draw: ++draws; break;
  }
  payoff_p1.add(static_cast<double>(r.outcome.utilities.p1));
  payoff_p2.add(static_cast<double>(r.outcome.utilities.p2));
  rounds.add(r.outcome.rounds_used);
  switch (r.spec.game) {
    case GameKind::Ultimatum:
      if (r.initial_offer) initial_offer.add(*r.initial_offer);
      break;
    case GameKind::BuySell:
      if (r.outcome.kind == OutcomeKind::Agreement && r.price) {
        const auto& cfg = std::get<games::BuySellConfig>(r.spec.config);
        const auto adv = games::buysell_advantages(*r.price, cfg.seller_min, cfg.buyer_max);
        seller_adv.add(static_cast<double>(adv.seller));
        buyer_adv.add(static_cast<double>(adv.buyer));
      }
      break;
    case GameKind::ResourceExchange:
      trade_volume.add(games::trade_volume(r.trades));
      break;
  }
}

void GroupAccumulator::merge(const GroupAccumulator& o) {
  records += o.records;
  failures += o.failures;
  agreements += o.agreements;
  rejections += o.rejections;
  timeouts += o.timeouts;
  p1_wins += o.p1_wins;
  p2_wins += o.p2_wins;
  draws += o.draws;
  payoff_p1.merge(o.payoff_p1);
  payoff_p2.merge(o.payoff_p2);
  initial_offer.merge(o.initial_offer);
  seller_adv.merge(o.seller_adv);
  buyer_adv.merge(o.buyer_adv);
  trade_volume.merge(o.trade_volume);
  rounds.merge(o.rounds);
}

Rate acceptance_counts(const std::vector<RunRecord>& records) {
  const auto r = accumulate(records).acceptance();
  if (r.trials == 0) throw EmptyInput("no completed games");
  return r;
}

double acceptance_rate(const std::vector<RunRecord>& records) { return acceptance_counts(records).value(); }

MetricSummary payoff_stats(const std::vector<RunRecord>& records, Role player) {
  const auto acc = accumulate(records);
  return non_empty(player == Role::Player1 ? acc.payoff_p1 : acc.payoff_p2, "a completed game");
}

Rate win_counts(const std::vector<RunRecord>& records) {
  const auto acc = accumulate(records);
  if (acc.records == acc.failures) throw EmptyInput("no completed games");
  const auto r = acc.wins();
  if (r.trials == 0) throw AllDraws("every game was a draw");
  return r;
}

double win_rate_p1(const std::vector<RunRecord>& records) { return win_counts(records).value(); }

MetricSummary initial_offer_stats(const std::vector<RunRecord>& records) {
  return non_empty(accumulate(records).initial_offer, "an initial offer");
}

AdvantageStats advantage_stats(const std::vector<RunRecord>& records) {
  const auto acc = accumulate(records);
  return {non_empty(acc.seller_adv, "an agreed price"), non_empty(acc.buyer_adv, "an agreed price")};
}

MetricSummary trade_volume_stats(const std::vector<RunRecord>& records) {
  return non_empty(accumulate(records).trade_volume, "a completed game");
}

MetricSummary rounds_stats(const std::vector<RunRecord>& records) {
  return non_empty(accumulate(records).rounds, "a completed game");
}

Rate failure_rate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw EmptyInput("no records");
  Rate r{0, static_cast<long long>(records.size())};
  for (const auto& rec : records) r.hits += counted(rec) ? 0 : 1;
  return r;
}

std::string language_label(agents::LanguageFraming f) { return std::string(agents::to_string(f)); }

bool operator<(const AggregationKey& a, const AggregationKey& b) {
  auto lang = [](const AggregationKey& k) {
    return k.language ? std::make_tuple(1, language_rank(*k.language), language_label(*k.language))
                      : std::make_tuple(0, 0, std::string());
  };
  return std::make_tuple(lang(a), a.model_p1, a.model_p2, a.game) <
         std::make_tuple(lang(b), b.model_p1, b.model_p2, b.game);
}

Aggregate aggregate(const std::vector<RunRecord>& records, const std::vector<std::string>& key_fields) {
  bool language = false, p1 = false, p2 = false, game = false;
  for (const auto& f : key_fields) {
    if (f == "language") {
      language = true;
    } else if (f == "pair") {
      p1 = p2 = true;
    } else if (f == "model_p1") {
      p1 = true;
    } else if (f == "model_p2") {
      p2 = true;
    } else if (f == "game") {
      game = true;
    } else {
      throw UnknownField("unknown aggregation field '" + f + "'");
    }
  }
  Aggregate out;
  for (const auto& r : records) {
    AggregationKey k;
    if (language) k.language = r.spec.framing;
    if (p1) k.model_p1 = r.model_p1();
    if (p2) k.model_p2 = r.model_p2();
    if (game) k.game = r.spec.game;
    out[k].add(r);
  }
  return out;
}

Aggregate merge(const Aggregate& a, const Aggregate& b) {
  Aggregate out = a;
  for (const auto& [k, g] : b) out[k].merge(g);
  return out;
}

std::vector<RunRecord> filter_game(const std::vector<RunRecord>& records, GameKind game) {
  std::vector<RunRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const RunRecord& r) { return r.spec.game == game; });
  return out;
}

std::vector<std::string> table_columns(GameKind game) {
  std::vector<std::string> cols{"Language"};
  for (const auto& c : columns_for(game)) cols.push_back(c.display);
  return cols;
}

namespace {

std::string game_title(GameKind game) {
  switch (game) {
    case GameKind::Ultimatum: return "Ultimatum Game";
    case GameKind::BuySell: return "Buy-Sell Game";
    case GameKind::ResourceExchange: return "Resource Exchange Game";
  }
  return "";
}

}  // namespace

Table language_table(GameKind game, const std::vector<RunRecord>& records) {
  const auto subset = filter_game(records, game);
  if (subset.empty()) throw EmptyInput("no " + std::string(to_string(game)) + " records");
  const auto agg = aggregate(subset, {"language"});
  const auto cols = columns_for(game);
  Table t;
  t.columns = table_columns(game);
  long long counted_games = 0, failures = 0;
  for (const auto& [key, g] : agg) {
    std::vector<std::string> row{language_label(*key.language)};
    for (const auto& c : cols) row.push_back(cell(c, g));
    t.rows.push_back(std::move(row));
    counted_games += g.records - g.failures;
    failures += g.failures;
  }
  t.title = game_title(game) + ": " + std::to_string(counted_games) + " games, " + std::to_string(failures) +
            " protocol failures excluded";
  t.notes = {"Rates: percentage ± binomial std sqrt(p(1-p)); standard error is binomial std / sqrt(n).",
             "Other columns: mean ± population std over individual games."};
  return t;
}

Table failure_table(GameKind game, const std::vector<RunRecord>& records) {
  const auto agg = aggregate(filter_game(records, game), {"language"});
  Table t;
  t.title = game_title(game) + ": protocol failures";
  t.columns = {"Language", "Runs", "Protocol Failures", "Failure Rate"};
  for (const auto& [key, g] : agg) {
    const auto r = g.failure();
    t.rows.push_back({language_label(*key.language), std::to_string(r.trials), std::to_string(r.hits),
                      fixed2(100.0 * r.value()) + "%"});
  }
  return t;
}

void print_table(std::ostream& out, const Table& t) {
  // Width in code points so "±" does not skew alignment.
  auto width = [](const std::string& s) { return protocol::utf8_length(s); };
  std::vector<std::size_t> w(t.columns.size(), 0);
  for (std::size_t i = 0; i < t.columns.size(); ++i) w[i] = width(t.columns[i]);
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size() && i < w.size(); ++i) w[i] = std::max(w[i], width(row[i]));
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) s += "  ";
      s += cells[i];
      if (i + 1 < cells.size()) s.append(w[i] - width(cells[i]), ' ');
    }
    out << s << "\n";
  };
  if (!t.title.empty()) out << t.title << "\n";
  line(t.columns);
  std::size_t total = 0;
  for (auto x : w) total += x;
  out << std::string(total + 2 * (w.empty() ? 0 : w.size() - 1), '-') << "\n";
  for (const auto& row : t.rows) line(row);
  for (const auto& n : t.notes) out << n << "\n";
}

std::vector<std::string> grid_metrics(GameKind game) {
  switch (game) {
    case GameKind::Ultimatum: return {"P1 Win Rate", "P1 Payoff"};
    case GameKind::BuySell: return {"Seller Advantage", "Buyer Advantage"};
    case GameKind::ResourceExchange: return {"P1 Payoff", "P2 Payoff"};
  }
  return {};
}

std::vector<Grid> pair_grids(GameKind game, const std::vector<RunRecord>& records) {
  const auto subset = filter_game(records, game);
  if (subset.empty()) throw EmptyInput("no " + std::string(to_string(game)) + " records");
  std::set<std::string> label_set;
  std::set<AggregationKey> languages;
  for (const auto& r : subset) {
    label_set.insert(r.model_p1());
    label_set.insert(r.model_p2());
    AggregationKey k;
    k.language = r.spec.framing;
    languages.insert(k);
  }
  const std::vector<std::string> labels(label_set.begin(), label_set.end());
  const auto agg = aggregate(subset, {"language", "pair"});
  std::vector<Grid> grids;
  for (const auto& lk : languages) {
    for (const auto& metric : grid_metrics(game)) {
      Grid g;
      g.game = game;
      g.language = *lk.language;
      g.metric = metric;
      g.labels = labels;
      g.cells.assign(labels.size(), std::vector<std::optional<double>>(labels.size()));
      for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t j = 0; j < labels.size(); ++j) {
          if (i == j) continue;
          AggregationKey k{lk.language, labels[i], labels[j], std::nullopt};
          auto it = agg.find(k);
          if (it != agg.end()) g.cells[i][j] = grid_value(metric, it->second);
        }
      }
      grids.push_back(std::move(g));
    }
  }
  return grids;
}

void print_grid(std::ostream& out, const Grid& g) {
  out << "grid game=" << to_string(g.game) << " language=" << language_label(g.language) << " metric=\"" << g.metric
      << "\" rows=model_p1 cols=model_p2\n";
  out << "model_p1\\model_p2";
  for (const auto& l : g.labels) out << "," << csv_quote(l);
  out << "\n";
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    out << csv_quote(g.labels[i]);
    for (const auto& v : g.cells[i]) out << "," << (v ? fixed2(*v) : std::string());
    out << "\n";
  }
}

ExportFormat export_format_from_string(const std::string& s) {
  if (s == "csv") return ExportFormat::Csv;
  if (s == "jsonl" || s == "structured-records") return ExportFormat::StructuredRecords;
  if (s == "heatmap" || s == "heatmap-grid") return ExportFormat::HeatmapGrid;
  throw UnknownField("unknown export format '" + s + "' (expected csv, jsonl or heatmap)");
}

void export_metrics(std::ostream& out, GameKind game, const std::vector<RunRecord>& records,
                    const std::string& group_by, ExportFormat format) {
  if (format == ExportFormat::HeatmapGrid) {
    bool first = true;
    for (const auto& g : pair_grids(game, records)) {
      if (!first) out << "\n";
      first = false;
      print_grid(out, g);
    }
    return;
  }
  const auto fields = key_fields_for(group_by);
  const auto subset = filter_game(records, game);
  if (subset.empty()) throw EmptyInput("no " + std::string(to_string(game)) + " records");
  const auto agg = aggregate(subset, fields);
  const auto cols = columns_for(game);
  const bool pairs = group_by == "pair";

  if (format == ExportFormat::Csv) {
    out << "game,language";
    if (pairs) out << ",model_p1,model_p2";
    out << ",records,protocol_failures";
    for (const auto& c : cols) {
      if (c.is_rate) {
        out << "," << c.id << "," << c.id << "_binomial_std," << c.id << "_hits," << c.id << "_trials";
      } else {
        out << "," << c.id << "_mean," << c.id << "_std," << c.id << "_n";
      }
    }
    out << "\n";
    for (const auto& [k, g] : agg) {
      out << to_string(game) << "," << language_label(*k.language);
      if (pairs) out << "," << csv_quote(*k.model_p1) << "," << csv_quote(*k.model_p2);
      out << "," << g.records << "," << g.failures;
      for (const auto& c : cols) {
        if (c.is_rate) {
          const auto r = c.rate(g);
          if (r.trials == 0) {
            out << ",,";
          } else {
            out << "," << fixed6(r.value()) << "," << fixed6(r.binomial_std());
          }
          out << "," << r.hits << "," << r.trials;
        } else {
          const auto& a = c.summary(g);
          if (a.count() == 0) {
            out << ",,";
          } else {
            const auto s = a.summary();
            out << "," << fixed6(s.mean) << "," << fixed6(s.std);
          }
          out << "," << a.count();
        }
      }
      out << "\n";
    }
    return;
  }

  for (const auto& [k, g] : agg) {
    nlohmann::ordered_json j;
    j["game"] = std::string(to_string(game));
    j["language"] = language_label(*k.language);
    if (pairs) {
      j["model_p1"] = *k.model_p1;
      j["model_p2"] = *k.model_p2;
    }
    j["records"] = g.records;
    j["protocol_failures"] = g.failures;
    for (const auto& c : cols) {
      if (c.is_rate) {
        const auto r = c.rate(g);
        if (r.trials == 0) {
          j[c.id] = nullptr;
        } else {
          j[c.id] = {{"value", r.value()},
                     {"binomial_std", r.binomial_std()},
                     {"standard_error", r.standard_error()},
                     {"hits", r.hits},
                     {"trials", r.trials}};
        }
      } else {
        const auto& a = c.summary(g);
        if (a.count() == 0) {
          j[c.id] = nullptr;
        } else {
          const auto s = a.summary();
          j[c.id] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
        }
      }
    }
    out << j.dump() << "\n";
  }
}

}  // namespace arena::metrics
