#include <gtest/gtest.h>

#include <cmath>

#include "detcal/error.hpp"
#include "detcal/geometry.hpp"
#include "oracles.hpp"

namespace detcal {
namespace {

TEST(BoxIou, SpotValues) {
  const BoundingBox a{0.5, 0.5, 0.2, 0.2};
  EXPECT_DOUBLE_EQ(box_iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(box_iou(a, BoundingBox{0.1, 0.1, 0.1, 0.1}), 0.0);
  const auto p = BoundingBox::from_corners(0.0, 0.0, 0.2, 0.2);
  const auto q = BoundingBox::from_corners(0.1, 0.1, 0.3, 0.3);
  EXPECT_NEAR(box_iou(p, q), 1.0 / 7.0, 1e-12);
}

TEST(BoxIou, SymmetricAndSelfOne) {
  oracle::Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const BoundingBox a{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0)};
    const BoundingBox b{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0)};
    EXPECT_EQ(box_iou(a, b), box_iou(b, a));
    EXPECT_NEAR(box_iou(a, a), 1.0, 1e-15);
    const double v = box_iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(BoundingBoxValidation, RejectsBadFields) {
  EXPECT_THROW(validate(BoundingBox{0.5, 0.5, 0.0, 0.2}), ValidationError);
  EXPECT_THROW(validate(BoundingBox{1.5, 0.5, 0.1, 0.2}), ValidationError);
  EXPECT_THROW(validate(BoundingBox{0.5, NAN, 0.1, 0.2}), ValidationError);
  EXPECT_NO_THROW(validate(BoundingBox{0.5, 0.5, 1.0, 1.0}));
}

TEST(BoundingBoxClip, ClipsOverhangBeyondTolerance) {
  BoundingBox b{0.05, 0.5, 0.2, 0.2};
  EXPECT_TRUE(clip_box(b));
  EXPECT_NEAR(b.left(), 0.0, 1e-15);
  EXPECT_NEAR(b.right(), 0.15, 1e-15);

  BoundingBox tolerated{0.05, 0.5, 0.2, 0.2};
  EXPECT_FALSE(clip_box(tolerated, 0.1));
  EXPECT_EQ(tolerated.w, 0.2);

  BoundingBox inside{0.5, 0.5, 0.2, 0.2};
  EXPECT_FALSE(clip_box(inside));
}

TEST(MaskIou, SpotValues) {
  const BinaryMask a(2, 1, std::vector<std::uint8_t>{1, 0});
  const BinaryMask b(2, 1, std::vector<std::uint8_t>{1, 1});
  EXPECT_DOUBLE_EQ(mask_iou(a, b), 0.5);
  EXPECT_DOUBLE_EQ(mask_iou(b, b), 1.0);
  EXPECT_DOUBLE_EQ(mask_iou(BinaryMask(3, 3), BinaryMask(3, 3)), 0.0);
  EXPECT_THROW(mask_iou(BinaryMask(2, 2), BinaryMask(2, 3)), ValidationError);
}

TEST(MaskConstruction, RejectsWrongLength) {
  EXPECT_THROW(BinaryMask(2, 2, std::vector<std::uint8_t>{1, 0, 1}), ValidationError);
}

TEST(DistanceToBoundary, SpotValues) {
  const auto row = distance_to_boundary(BinaryMask(7, 1, true));
  for (const double d : row) EXPECT_EQ(d, 0.0);

  const auto full = distance_to_boundary(BinaryMask(5, 5, true));
  EXPECT_EQ(full[0], 0.0);
  EXPECT_DOUBLE_EQ(full[12], 2.0);

  const auto three = distance_to_boundary(BinaryMask(3, 3, true));
  EXPECT_DOUBLE_EQ(three[4], 1.0);
}

TEST(DistanceToBoundary, InteriorEdgeOfBlob) {
  BinaryMask m(9, 9, false);
  for (std::size_t r = 2; r <= 6; ++r) {
    for (std::size_t c = 2; c <= 6; ++c) m.set(c, r, true);
  }
  const auto d = distance_to_boundary(m);
  EXPECT_EQ(d[4 * 9 + 4], 2.0);  // centre of the 5x5 blob
  EXPECT_EQ(d[2 * 9 + 2], 0.0);  // blob corner
  EXPECT_EQ(d[1 * 9 + 2], 0.0);  // outside neighbour of the blob edge
}

TEST(DistanceToBoundary, MatchesBruteForceOnRandomMasks) {
  oracle::Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = rng.integer(1, 16);
    const int h = rng.integer(1, 16);
    const double density = rng.uniform(0.0, 1.0);
    std::vector<int> bits(static_cast<std::size_t>(w * h));
    std::vector<std::uint8_t> packed(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) packed[i] = bits[i] = rng.coin(density) ? 1 : 0;
    const auto expected = oracle::distance_to_boundary(bits, w, h);
    const auto got = distance_to_boundary(BinaryMask(w, h, packed));
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], expected[i], 1e-12) << "cell " << i;
  }
}

TEST(Rle, RoundTrip) {
  const std::vector<std::uint8_t> bits{1, 1, 1, 0, 0, 1};
  EXPECT_EQ(encode_rle(bits), "3x1;2x0;1x1");
  EXPECT_EQ(decode_rle("3x1;2x0;1x1", 6), bits);
  EXPECT_EQ(decode_rle("", 0), std::vector<std::uint8_t>{});
}

TEST(Rle, RejectsMalformed) {
  EXPECT_THROW(decode_rle("3x1;2x0", 6), Error);
  EXPECT_THROW(decode_rle("3y1", 3), Error);
  EXPECT_THROW(decode_rle("2x2", 2), Error);
}

}  // namespace
}  // namespace detcal
