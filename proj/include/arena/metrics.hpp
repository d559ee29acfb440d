#pragma once

// Negotiation metrics over run records. Rates come from total counts;
// payoffs, offers, advantages, volumes and rounds are population mean/std
// over the concatenated per-record values. ProtocolFailure records are
// excluded everywhere except failure_rate.

#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "arena/run_record.hpp"

namespace arena::metrics {

using runlog::RunRecord;

class EmptyInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every counted game was a draw, so the non-draw win rate is undefined.
class AllDraws : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UnknownField : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MixedGames : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population
  long long n = 0;
};

/// Welford running moments; merge() combines two shards exactly as if all
/// values had been added to one accumulator.
class Accumulator {
 public:
  void add(double x);
  void merge(const Accumulator& other);
  long long count() const { return n_; }
  /// sum / n, so integer-valued data gives the same mean in any order.
  double mean() const { return n_ == 0 ? 0.0 : sum_ / static_cast<double>(n_); }
  double m2() const { return m2_; }
  MetricSummary summary() const;

 private:
  long long n_ = 0;
  double mean_ = 0.0;  // running mean for the m2 update
  double m2_ = 0.0;
  double sum_ = 0.0;
};

struct Rate {
  long long hits = 0;
  long long trials = 0;
  double value() const { return trials == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(trials); }
  /// sqrt(p(1-p)): spread of the per-game 0/1 indicator. This is what the
  /// tables print after "±".
  double binomial_std() const;
  /// binomial_std / sqrt(trials).
  double standard_error() const;
};

double acceptance_rate(const std::vector<RunRecord>& records);
Rate acceptance_counts(const std::vector<RunRecord>& records);
MetricSummary payoff_stats(const std::vector<RunRecord>& records, Role player);
double win_rate_p1(const std::vector<RunRecord>& records);
Rate win_counts(const std::vector<RunRecord>& records);
MetricSummary initial_offer_stats(const std::vector<RunRecord>& records);
struct AdvantageStats {
  MetricSummary seller;
  MetricSummary buyer;
};
AdvantageStats advantage_stats(const std::vector<RunRecord>& records);
MetricSummary trade_volume_stats(const std::vector<RunRecord>& records);
MetricSummary rounds_stats(const std::vector<RunRecord>& records);
/// ProtocolFailure records over all records.
Rate failure_rate(const std::vector<RunRecord>& records);

/// All per-group state needed for every metric; mergeable.
struct GroupAccumulator {
  long long records = 0;
  long long failures = 0;
  long long agreements = 0;
  long long rejections = 0;
  long long timeouts = 0;
  long long p1_wins = 0;
  long long p2_wins = 0;
  long long draws = 0;
  Accumulator payoff_p1, payoff_p2, initial_offer, seller_adv, buyer_adv, trade_volume, rounds;

  void add(const RunRecord& r);
  void merge(const GroupAccumulator& o);

  Rate acceptance() const { return {agreements, agreements + rejections + timeouts}; }
  Rate wins() const { return {p1_wins, p1_wins + p2_wins}; }
  Rate failure() const { return {failures, records}; }
};

struct AggregationKey {
  std::optional<agents::LanguageFraming> language;
  std::optional<std::string> model_p1;
  std::optional<std::string> model_p2;
  std::optional<GameKind> game;
  friend bool operator==(const AggregationKey&, const AggregationKey&) = default;
};

/// English first, then other languages alphabetically; models by label.
bool operator<(const AggregationKey& a, const AggregationKey& b);

std::string language_label(agents::LanguageFraming f);

using Aggregate = std::map<AggregationKey, GroupAccumulator>;

/// Groups by any of "language", "pair", "model_p1", "model_p2", "game".
/// Throws UnknownField for anything else.
Aggregate aggregate(const std::vector<RunRecord>& records, const std::vector<std::string>& key_fields);

/// Union of two aggregates over disjoint record sets.
Aggregate merge(const Aggregate& a, const Aggregate& b);

/// A rendered table: header plus string cells.
struct Table {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;
};

/// Header of the per-language table for `game`, in print order.
std::vector<std::string> table_columns(GameKind game);

/// Per-language table for one game, with the standard summary columns.
Table language_table(GameKind game, const std::vector<RunRecord>& records);

/// Protocol failure counts per language for one game.
Table failure_table(GameKind game, const std::vector<RunRecord>& records);

void print_table(std::ostream& out, const Table& t);

/// One model-pair grid: rows are Player 1 models, columns Player 2 models,
/// both sorted by label. Cells without data (including the diagonal) are
/// empty.
struct Grid {
  GameKind game = GameKind::Ultimatum;
  agents::LanguageFraming language = agents::LanguageFraming::English;
  std::string metric;
  std::vector<std::string> labels;
  std::vector<std::vector<std::optional<double>>> cells;
};

/// Metrics drawn per (language, pair) for `game`.
std::vector<std::string> grid_metrics(GameKind game);

/// Grids for every language present, every metric in grid_metrics(game).
std::vector<Grid> pair_grids(GameKind game, const std::vector<RunRecord>& records);

void print_grid(std::ostream& out, const Grid& g);

enum class ExportFormat { Csv, StructuredRecords, HeatmapGrid };
ExportFormat export_format_from_string(const std::string& s);

/// Writes the aggregate for `game` in `format`. Csv and StructuredRecords
/// group by `group_by` ("language" or "pair"); HeatmapGrid always uses pairs.
void export_metrics(std::ostream& out, GameKind game, const std::vector<RunRecord>& records,
                    const std::string& group_by, ExportFormat format);

/// Records of one game kind, in their original order.
std::vector<RunRecord> filter_game(const std::vector<RunRecord>& records, GameKind game);

}  // namespace arena::metrics
