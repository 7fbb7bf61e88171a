#pragma once

#include <algorithm>
#include <compare>
#include <string>
#include <vector>

#include "editdiff/numeric.hpp"

namespace editdiff {

using Token = int;
using Seq = std::vector<Token>;

/// Data tokens are 0..data_size-1; INS, DEL, EOS follow in that order.
struct Vocabulary {
  int data_size = 1;
  std::vector<std::string> printable;  // one entry per data token; empty means decimal
  std::string separator = " ";

  Vocabulary() = default;
  explicit Vocabulary(int d, std::vector<std::string> names = {}, std::string sep = " ")
      : data_size(d), printable(std::move(names)), separator(std::move(sep)) {
    if (data_size < 1) throw Error(errc::invalid_argument, "data_size must be >= 1");
    if (!printable.empty() && static_cast<int>(printable.size()) != data_size)
      throw Error(errc::invalid_argument, "printable map size differs from data_size");
  }

  Token ins() const { return data_size; }
  Token del() const { return data_size + 1; }
  Token eos() const { return data_size + 2; }
  int total_size() const { return data_size + 3; }
  /// Tokens that may appear in a latent sequence: data, INS, DEL.
  int latent_size() const { return data_size + 2; }
  bool is_data(Token t) const { return t >= 0 && t < data_size; }

  std::string token_string(Token t) const {
    if (t == ins()) return "⟨INS⟩";
    if (t == del()) return "⟨DEL⟩";
    if (t == eos()) return "⟨EOS⟩";
    if (!printable.empty()) return printable.at(static_cast<std::size_t>(t));
    return std::to_string(t);
  }

  bool operator==(const Vocabulary&) const = default;
};

enum class Level { data, latent };

/// Throws on the first violated invariant.
inline void validate_sequence(const Seq& s, Level level, const Vocabulary& v) {
  for (Token t : s) {
    if (t < 0 || t >= v.total_size() || t == v.eos())
      throw Error(errc::out_of_range_index, "token " + std::to_string(t));
    if (level == Level::data && (t == v.ins() || t == v.del()))
      throw Error(errc::marker_in_data_sequence, v.token_string(t));
  }
}

inline bool is_valid_sequence(const Seq& s, Level level, const Vocabulary& v) {
  try {
    validate_sequence(s, level, v);
    return true;
  } catch (const Error&) {
    return false;
  }
}

inline std::string render(const Seq& s, const Vocabulary& v) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += v.separator;
    out += v.token_string(s[i]);
  }
  return out;
}

struct EditOp {
  enum class Kind { replace, insert, remove };
  Kind kind;
  Token in = -1;   // consumed token, unused for insert
  Token out = -1;  // emitted token, unused for remove

  static EditOp rep(Token x, Token z) { return {Kind::replace, x, z}; }
  static EditOp ins(Token z) { return {Kind::insert, -1, z}; }
  static EditOp del(Token x) { return {Kind::remove, x, -1}; }

  bool consumes() const { return kind != Kind::insert; }
  bool emits() const { return kind != Kind::remove; }
  auto operator<=>(const EditOp&) const = default;
};

using EditSummary = std::vector<EditOp>;

inline Seq consumed(const EditSummary& a) {
  Seq s;
  for (const auto& op : a)
    if (op.consumes()) s.push_back(op.in);
  return s;
}

inline Seq emitted(const EditSummary& a) {
  Seq s;
  for (const auto& op : a)
    if (op.emits()) s.push_back(op.out);
  return s;
}

inline Seq apply_edit_summary(const Seq& x0, const EditSummary& a) {
  if (consumed(a) != x0)
    throw Error(errc::projection_mismatch, "summary does not consume the given sequence");
  return emitted(a);
}

/// Within every gap (maximal run of insert/remove ops) inserts move before
/// removes; relative order inside each class is kept.
inline EditSummary canonicalize_summary(const EditSummary& a) {
  EditSummary out;
  out.reserve(a.size());
  std::vector<EditOp> dels;
  for (const auto& op : a) {
    if (op.kind == EditOp::Kind::insert) {
      out.push_back(op);
    } else if (op.kind == EditOp::Kind::remove) {
      dels.push_back(op);
    } else {
      out.insert(out.end(), dels.begin(), dels.end());
      dels.clear();
      out.push_back(op);
    }
  }
  out.insert(out.end(), dels.begin(), dels.end());
  return out;
}

inline bool is_canonical(const EditSummary& a) { return canonicalize_summary(a) == a; }

inline std::string render(const EditSummary& a, const Vocabulary& v) {
  std::string out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) out += ' ';
    const auto& op = a[i];
    switch (op.kind) {
      case EditOp::Kind::replace:
        out += "Rep(" + v.token_string(op.in) + "," + v.token_string(op.out) + ")";
        break;
      case EditOp::Kind::insert: out += "Ins(" + v.token_string(op.out) + ")"; break;
      case EditOp::Kind::remove: out += "Del(" + v.token_string(op.in) + ")"; break;
    }
  }
  return out;
}

}  // namespace editdiff
