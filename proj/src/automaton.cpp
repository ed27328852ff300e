#include "driftguard/automaton.hpp"

#include <queue>
#include <sstream>
#include <stdexcept>

namespace driftguard {

namespace {

constexpr std::array<std::string_view, kStateCount> kStateNames = {
    "S0", "S1", "S2", "S3", "S4", "S5"};

std::optional<StateId> state_from_token(std::string_view tok) {
  for (std::size_t i = 0; i < kStateCount; ++i) {
    if (tok == kStateNames[i]) return static_cast<StateId>(i);
  }
  return std::nullopt;
}

std::optional<InputSymbol> symbol_from_token(std::string_view tok) {
  if (tok == "0") return InputSymbol::zero;
  if (tok == "1") return InputSymbol::one;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(StateId s) {
  return kStateNames[static_cast<std::size_t>(s)];
}

std::string_view to_string(InputSymbol i) {
  return i == InputSymbol::zero ? "0" : "1";
}

StateId TransitionTable::step(StateId from, InputSymbol input) const {
  const auto& cell =
      next[static_cast<std::size_t>(from)][static_cast<std::size_t>(input)];
  if (!cell) {
    throw std::logic_error("transition table has no entry for (" +
                           std::string(to_string(from)) + ", " +
                           std::string(to_string(input)) + ")");
  }
  return *cell;
}

const TransitionTable& default_table() {
  using enum StateId;
  static const TransitionTable table{{{
      {{S4, S1}},  // S0
      {{S0, S2}},  // S1
      {{S3, S3}},  // S2
      {{S4, S5}},  // S3
      {{S4, S5}},  // S4
      {{S0, S0}},  // S5
  }}};
  return table;
}

bool RunTrace::is_consistent() const {
  if (steps.empty()) return current == StateId::S0;
  if (steps.front().from != StateId::S0) return false;
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    if (steps[i].to != steps[i + 1].from) return false;
  }
  return steps.back().to == current;
}

bool RunTrace::passed_accepting() const {
  for (const auto& s : steps) {
    if (s.to == StateId::S5) return true;
  }
  return false;
}

bool RunTrace::is_valid_walk(const TransitionTable& table) const {
  for (const auto& s : steps) {
    const auto& cell = table.next[static_cast<std::size_t>(s.from)]
                                 [static_cast<std::size_t>(s.input)];
    if (!cell || *cell != s.to) return false;
  }
  return true;
}

std::string RunTrace::to_string() const {
  std::string out{driftguard::to_string(steps.empty() ? current : steps.front().from)};
  for (const auto& s : steps) {
    out += '>';
    out += driftguard::to_string(s.to);
  }
  return out;
}

RunTrace run(const TransitionTable& table, const std::vector<InputSymbol>& inputs) {
  RunTrace trace;
  for (const InputSymbol in : inputs) trace.apply(table, in);
  return trace;
}

ValidationReport validate(const TransitionTable& table) {
  ValidationReport report;

  for (std::size_t s = 0; s < kStateCount; ++s) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (!table.next[s][i]) {
        report.total = false;
        report.violations.push_back(
            {TableViolation::Kind::missing_entry, static_cast<StateId>(s),
             static_cast<InputSymbol>(i),
             "no entry for (" + std::string(kStateNames[s]) + ", " +
                 (i == 0 ? "0" : "1") + ")"});
      }
    }
  }

  // Forward reachability from S0, following only defined edges.
  std::array<bool, kStateCount> reached{};
  std::queue<StateId> frontier;
  reached[0] = true;
  frontier.push(StateId::S0);
  while (!frontier.empty()) {
    const StateId s = frontier.front();
    frontier.pop();
    for (const auto& cell : table.next[static_cast<std::size_t>(s)]) {
      if (!cell) continue;
      auto& seen = reached[static_cast<std::size_t>(*cell)];
      if (!seen) {
        seen = true;
        frontier.push(*cell);
      }
    }
  }
  for (std::size_t i = 0; i < kStateCount; ++i) {
    if (!reached[i]) {
      report.violations.push_back(
          {TableViolation::Kind::unreachable_state, static_cast<StateId>(i),
           InputSymbol::zero,
           std::string(kStateNames[i]) + " unreachable from S0"});
    }
  }

  // Every state must have a path into S5.
  for (std::size_t i = 0; i < kStateCount; ++i) {
    if (i == static_cast<std::size_t>(StateId::S5)) continue;
    std::array<bool, kStateCount> seen{};
    std::queue<StateId> q;
    seen[i] = true;
    q.push(static_cast<StateId>(i));
    bool hits_final = false;
    while (!q.empty() && !hits_final) {
      const StateId s = q.front();
      q.pop();
      for (const auto& cell : table.next[static_cast<std::size_t>(s)]) {
        if (!cell) continue;
        if (*cell == StateId::S5) {
          hits_final = true;
          break;
        }
        auto& v = seen[static_cast<std::size_t>(*cell)];
        if (!v) {
          v = true;
          q.push(*cell);
        }
      }
    }
    if (!hits_final) {
      report.violations.push_back(
          {TableViolation::Kind::accepting_unreachable, static_cast<StateId>(i),
           InputSymbol::zero,
           "S5 unreachable from " + std::string(kStateNames[i])});
    }
  }

  return report;
}

TableParseResult parse_table_file(std::string_view text) {
  TableParseResult result;
  std::array<std::array<bool, 2>, kStateCount> defined{};

  std::istringstream lines{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    std::string from_tok, sym_tok, to_tok, extra;
    if (!(fields >> from_tok)) continue;  // blank or comment-only line
    if (!(fields >> sym_tok >> to_tok) || (fields >> extra)) {
      result.errors.push_back({lineno, "expected `FROM SYMBOL TO`"});
      continue;
    }
    const auto from = state_from_token(from_tok);
    const auto sym = symbol_from_token(sym_tok);
    const auto to = state_from_token(to_tok);
    if (!from || !sym || !to) {
      result.errors.push_back(
          {lineno, "unrecognized token in `" + from_tok + " " + sym_tok + " " +
                       to_tok + "`"});
      continue;
    }
    auto& seen = defined[static_cast<std::size_t>(*from)]
                        [static_cast<std::size_t>(*sym)];
    if (seen) {
      result.errors.push_back(
          {lineno, "duplicate entry for (" + std::string(to_string(*from)) +
                       ", " + std::string(to_string(*sym)) + ")"});
      continue;
    }
    seen = true;
    result.table.next[static_cast<std::size_t>(*from)]
                     [static_cast<std::size_t>(*sym)] = *to;
  }

  for (std::size_t s = 0; s < kStateCount; ++s) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (!defined[s][i]) {
        result.errors.push_back(
            {0, "missing entry for (" + std::string(kStateNames[s]) + ", " +
                    (i == 0 ? "0" : "1") + ")"});
      }
    }
  }
  return result;
}

}  // namespace driftguard
