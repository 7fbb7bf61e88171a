#include <gtest/gtest.h>

#include "editdiff/core_seq.hpp"

using namespace editdiff;

namespace {

// Letters a..i as data tokens 0..8.
Vocabulary letters() {
  std::vector<std::string> names;
  for (char c = 'a'; c <= 'i'; ++c) names.emplace_back(1, c);
  return Vocabulary(9, names, " ");
}

Token L(char c) { return c - 'a'; }

}  // namespace

TEST(Vocabulary, MarkersAreDistinctAndOutsideDataRange) {
  Vocabulary v(5);
  EXPECT_EQ(v.total_size(), 8);
  EXPECT_EQ(v.ins(), 5);
  EXPECT_EQ(v.del(), 6);
  EXPECT_EQ(v.eos(), 7);
  EXPECT_FALSE(v.is_data(v.ins()));
  EXPECT_THROW(Vocabulary(0), Error);
}

TEST(ValidateSequence, DataLevelAcceptsMarkerFree) {
  Vocabulary v(2);
  EXPECT_NO_THROW(validate_sequence({0, 1, 0}, Level::data, v));
}

TEST(ValidateSequence, DataLevelRejectsMarkers) {
  Vocabulary v(2);
  try {
    validate_sequence({0, v.del()}, Level::data, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::marker_in_data_sequence);
  }
}

TEST(ValidateSequence, LatentLevelAcceptsMarkers) {
  Vocabulary v(2);
  EXPECT_NO_THROW(validate_sequence({v.ins(), v.del(), 0}, Level::latent, v));
}

TEST(ValidateSequence, RejectsEosAndOutOfRange) {
  Vocabulary v(2);
  try {
    validate_sequence({v.eos()}, Level::latent, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::out_of_range_index);
  }
  EXPECT_THROW(validate_sequence({-1}, Level::latent, v), Error);
  EXPECT_THROW(validate_sequence({9}, Level::latent, v), Error);
}

TEST(ApplyEditSummary, FigureExampleCanonicalized) {
  auto v = letters();
  const Seq x0{L('a'), L('b'), L('c'), L('d'), L('e'), L('f')};
  const EditSummary a{EditOp::rep(L('a'), L('a')), EditOp::ins(L('g')), EditOp::ins(L('h')),
                      EditOp::del(L('b')),        EditOp::rep(L('c'), L('i')), EditOp::ins(v.ins()),
                      EditOp::rep(L('d'), v.del()), EditOp::del(L('e')), EditOp::rep(L('f'), L('f')),
                      EditOp::ins(v.del())};
  const Seq xt = apply_edit_summary(x0, a);
  EXPECT_EQ(render(xt, v), "a g h i ⟨INS⟩ ⟨DEL⟩ f ⟨DEL⟩");
  EXPECT_EQ(consumed(a), x0);
  EXPECT_TRUE(is_canonical(a));
}

TEST(ApplyEditSummary, IdentityAndTotalDeletion) {
  EXPECT_EQ(apply_edit_summary({0, 1}, {EditOp::rep(0, 0), EditOp::rep(1, 1)}), (Seq{0, 1}));
  EXPECT_TRUE(apply_edit_summary({0}, {EditOp::del(0)}).empty());
}

TEST(ApplyEditSummary, ProjectionMismatchThrows) {
  try {
    apply_edit_summary({0, 1}, {EditOp::rep(0, 0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::projection_mismatch);
  }
}

TEST(Canonicalize, MovesInsertsBeforeDeletes) {
  auto v = letters();
  const EditSummary a{EditOp::ins(L('g')), EditOp::del(L('b')), EditOp::ins(L('h'))};
  const EditSummary want{EditOp::ins(L('g')), EditOp::ins(L('h')), EditOp::del(L('b'))};
  EXPECT_EQ(canonicalize_summary(a), want);
  EXPECT_EQ(canonicalize_summary({EditOp::del(L('b')), EditOp::ins(L('g'))}),
            (EditSummary{EditOp::ins(L('g')), EditOp::del(L('b'))}));
  (void)v;
}

TEST(Canonicalize, IdempotentAndProjectionPreserving) {
  const EditSummary a{EditOp::del(0), EditOp::ins(1), EditOp::rep(1, 0), EditOp::del(1),
                      EditOp::ins(0), EditOp::del(0), EditOp::ins(1)};
  const auto c = canonicalize_summary(a);
  EXPECT_EQ(canonicalize_summary(c), c);
  EXPECT_EQ(consumed(c), consumed(a));
  EXPECT_EQ(emitted(c), emitted(a));
  // Gaps are not merged across replacements.
  EXPECT_EQ(c[2], EditOp::rep(1, 0));
}
