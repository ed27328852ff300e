#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace driftguard {

/// States of the detection-cycle controller.
///
/// S0 collect, S1 detect, S2 verify (secondary classification), S3 vote,
/// S4 safe hold, S5 cycle complete. S5 is an acceptance marker on the trace,
/// not a halt: the machine loops back to S0 and runs forever.
enum class StateId : std::uint8_t { S0, S1, S2, S3, S4, S5 };

inline constexpr std::size_t kStateCount = 6;

enum class InputSymbol : std::uint8_t { zero = 0, one = 1 };

std::string_view to_string(StateId s);
std::string_view to_string(InputSymbol i);

/// Transition map (state, symbol) -> state. Plain data so defective tables
/// can be constructed for validate() and alternates loaded from a file.
/// A cell may be unset only in such constructed/parsed tables; every table
/// that reaches the stepping engine must be total (validate() checks this).
struct TransitionTable {
  std::array<std::array<std::optional<StateId>, 2>, kStateCount> next{};

  /// Total-function step. Throws std::logic_error on an unset cell; that is
  /// a caller bug, since only validated tables may be executed.
  StateId step(StateId from, InputSymbol input) const;

  bool operator==(const TransitionTable&) const = default;
};

/// The controller's built-in transition function:
///   S0: 0->S4 1->S1    S1: 0->S0 1->S2    S2: 0->S3 1->S3
///   S3: 0->S4 1->S5    S4: 0->S4 1->S5    S5: 0->S0 1->S0
const TransitionTable& default_table();

/// One executed transition.
struct TraceStep {
  StateId from;
  InputSymbol input;
  StateId to;

  bool operator==(const TraceStep&) const = default;
};

/// Audit log of a machine execution. Starts at S0; `current` always equals
/// the last step's target (or S0 if no steps were taken).
struct RunTrace {
  std::vector<TraceStep> steps;
  StateId current = StateId::S0;

  void apply(const TransitionTable& table, InputSymbol input) {
    const StateId to = table.step(current, input);
    steps.push_back({current, input, to});
    current = to;
  }

  /// True when the chain starts at S0 and every step's source matches the
  /// previous step's target.
  bool is_consistent() const;

  /// True if any step lands in S5 (one detection cycle completed).
  bool passed_accepting() const;

  /// Walk check against a table: every recorded step must agree with it.
  bool is_valid_walk(const TransitionTable& table) const;

  /// "S0>S1>S2" style rendering, "S0" for the empty trace.
  std::string to_string() const;
};

/// Fold of step over `inputs`, starting fresh at S0.
RunTrace run(const TransitionTable& table, const std::vector<InputSymbol>& inputs);

struct TableViolation {
  enum class Kind {
    missing_entry,         // (state, symbol) undefined
    unreachable_state,     // state not reachable from S0
    accepting_unreachable  // S5 not reachable from some state
  };
  Kind kind;
  StateId state;
  InputSymbol input = InputSymbol::zero;  // meaningful for missing_entry
  std::string detail;
};

/// Structural report on a table. Never throws; collects every violation.
/// Determinism is structural here (one cell per pair) and reported as such.
struct ValidationReport {
  bool total = true;
  bool deterministic = true;
  std::vector<TableViolation> violations;

  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const TransitionTable& table);

struct TableParseError {
  int line = 0;  // 0 when the problem is file-level (missing entries)
  std::string message;
};

struct TableParseResult {
  TransitionTable table{};
  std::vector<TableParseError> errors;

  bool ok() const { return errors.empty(); }
};

/// Table override file: one `FROM SYMBOL TO` line per entry (`S0 1 S1`),
/// `#` starts a comment, blank lines ignored. All 12 entries required,
/// duplicates rejected.
TableParseResult parse_table_file(std::string_view text);

}  // namespace driftguard
