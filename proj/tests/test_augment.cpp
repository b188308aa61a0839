#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "deepclass/augment.hpp"
#include "deepclass/errors.hpp"
#include "oracles.hpp"

using namespace deepclass;
using deepclass::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

std::vector<float> sorted_values(const Tensor& t) {
    std::vector<float> v(t.values().begin(), t.values().end());
    std::sort(v.begin(), v.end());
    return v;
}

Tensor rotate_quarter(const Tensor& img, std::size_t turns) { return apply_transform(img, {6 * turns, Flip::none}); }

}  // namespace

TEST(Transform, VocabularyAndOrdinals) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t i = 0; i < kTransformCount; ++i) {
        Transform t = Transform::from_ordinal(i);
        EXPECT_EQ(t.ordinal(), i);
        seen.insert({t.angle_index, static_cast<std::size_t>(t.flip)});
    }
    EXPECT_EQ(seen.size(), 96u);
    EXPECT_TRUE(Transform::from_ordinal(0).is_identity());
    EXPECT_EQ(Transform::from_ordinal(1).flip, Flip::horizontal);
    EXPECT_EQ(Transform::from_ordinal(4).angle_index, 1u);
    EXPECT_DOUBLE_EQ(Transform::from_ordinal(95).degrees(), 345.0);
    EXPECT_THROW(Transform::from_ordinal(96), ArgumentError);
    for (Flip f : {Flip::none, Flip::horizontal, Flip::vertical, Flip::both}) EXPECT_EQ(flip_from_name(flip_name(f)), f);
    EXPECT_FALSE(flip_from_name("diagonal"));
}

TEST(Plan, DefaultTargetsAreTheVerbatimCounts) {
    AugmentTargets t = default_targets();
    EXPECT_EQ(t[index_of(ClassLabel::M)], 13350u);
    EXPECT_EQ(t[index_of(ClassLabel::N)], 26820u);
    EXPECT_EQ(t[index_of(ClassLabel::BCC)], 16440u);
    EXPECT_EQ(t[index_of(ClassLabel::AK)], 13050u);
    EXPECT_EQ(t[index_of(ClassLabel::PBK)], 13185u);
    EXPECT_EQ(t[index_of(ClassLabel::D)], 10212u);
    EXPECT_EQ(t[index_of(ClassLabel::VL)], 11300u);
}

TEST(Plan, PerImageCountsExamples) {
    EXPECT_EQ(per_image_counts(100, 1000, ClassLabel::M), std::vector<std::size_t>(100, 10));
    EXPECT_EQ(per_image_counts(3, 10, ClassLabel::M), (std::vector<std::size_t>{4, 3, 3}));
    EXPECT_EQ(per_image_counts(2, 192, ClassLabel::M), (std::vector<std::size_t>{96, 96}));
    try {
        per_image_counts(2, 193, ClassLabel::D);
        FAIL() << "capacity exceeded without error";
    } catch (const CapacityError& e) {
        EXPECT_NE(std::string(e.what()).find("class D"), std::string::npos);
    }
    EXPECT_THROW(per_image_counts(0, 5, ClassLabel::VL), CapacityError);
}

TEST(Plan, HitsTargetsFromHamLikePopulations) {
    // HAM10000-sized class populations in canonical order.
    std::array<std::size_t, kClassCount> counts{1113, 6705, 514, 327, 1099, 115, 142};
    AugmentPlan plan = plan_augmentation(counts, default_targets());
    EXPECT_EQ(plan.totals(), default_targets());
    for (const PlannedImage& img : plan.images) {
        ASSERT_FALSE(img.transforms.empty());
        EXPECT_TRUE(img.transforms.front().is_identity());
        for (std::size_t k = 0; k < img.transforms.size(); ++k) EXPECT_EQ(img.transforms[k].ordinal(), k);
    }
}

TEST(Plan, ManifestOrderRemainders) {
    DatasetManifest m;
    const ClassLabel labels[] = {ClassLabel::N, ClassLabel::M, ClassLabel::N, ClassLabel::N, ClassLabel::M};
    for (std::size_t i = 0; i < 5; ++i) m.samples.push_back({"id" + std::to_string(i), "", labels[i]});
    AugmentTargets t{};
    t[index_of(ClassLabel::M)] = 5;
    t[index_of(ClassLabel::N)] = 7;
    AugmentPlan plan = plan_augmentation(m, t);
    ASSERT_EQ(plan.images.size(), 5u);
    std::vector<std::size_t> sizes;
    for (const PlannedImage& p : plan.images) sizes.push_back(p.transforms.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 2, 2, 2}));
    EXPECT_EQ(plan.images[1].source_index, 1u);
    EXPECT_EQ(plan.totals()[index_of(ClassLabel::N)], 7u);
}

TEST(Plan, PropertyTotalsAndDistinctTransforms) {
    Rng rng(2024, "test/plan-property");
    std::size_t cases = 0;
    while (cases < 200) {
        std::size_t n = 1 + rng.below(300);
        std::size_t t = rng.below(n * 96 + 1);
        auto counts = per_image_counts(n, t, ClassLabel::BCC);
        std::size_t sum = 0, lo = SIZE_MAX, hi = 0;
        for (std::size_t c : counts) {
            sum += c;
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        ASSERT_EQ(sum, t);
        ASSERT_LE(hi - lo, 1u);
        ASSERT_TRUE(std::is_sorted(counts.rbegin(), counts.rend()));  // extras go to the first images
        ++cases;
    }
    EXPECT_EQ(cases, 200u);
}

TEST(ApplyTransform, IdentityIsBitExact) {
    Rng rng(1, "test/identity");
    Tensor img = random_tensor(rng, {3, 9, 9}, 0.0, 1.0);
    EXPECT_TRUE(apply_transform(img, {}) == img);
}

TEST(ApplyTransform, QuarterTurnIsCounterClockwise) {
    Tensor img({3, 2, 2});
    const float v[] = {1, 2, 3, 4};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 4; ++i) img[c * 4 + i] = v[i] + 10.0f * c;
    Tensor r = rotate_quarter(img, 1);
    EXPECT_EQ(r[0], 2.0f);
    EXPECT_EQ(r[1], 4.0f);
    EXPECT_EQ(r[2], 1.0f);
    EXPECT_EQ(r[3], 3.0f);
    EXPECT_EQ(r[4], 12.0f);
}

TEST(ApplyTransform, FlipsAreInvolutions) {
    Rng rng(2, "test/flip");
    Tensor img = random_tensor(rng, {3, 6, 6}, 0.0, 1.0);
    for (Flip f : {Flip::horizontal, Flip::vertical, Flip::both}) {
        Tensor once = apply_transform(img, {0, f});
        EXPECT_FALSE(once == img);
        EXPECT_TRUE(apply_transform(once, {0, f}) == img);
    }
    Tensor h = apply_transform(img, {0, Flip::horizontal});
    EXPECT_EQ(h[0], img[5]);
}

TEST(ApplyTransform, FlipHappensBeforeRotation) {
    Rng rng(3, "test/order");
    Tensor img = random_tensor(rng, {3, 5, 5}, 0.0, 1.0);
    Tensor combined = apply_transform(img, {6, Flip::horizontal});
    Tensor manual = rotate_quarter(apply_transform(img, {0, Flip::horizontal}), 1);
    EXPECT_TRUE(combined == manual);
}

TEST(ApplyTransform, RightAnglesPermuteAndInvert) {
    Rng rng(4, "test/right-angles");
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t s = 1 + rng.below(12);
        Tensor img = random_tensor(rng, {3, s, s}, 0.0, 1.0);
        for (std::size_t turns = 1; turns < 4; ++turns) {
            Tensor r = rotate_quarter(img, turns);
            EXPECT_EQ(sorted_values(r), sorted_values(img));
            EXPECT_TRUE(rotate_quarter(r, 4 - turns) == img);
        }
        for (std::size_t o = 0; o < kTransformCount; ++o) {
            Transform t = Transform::from_ordinal(o);
            if (t.is_right_angle()) {
                EXPECT_EQ(sorted_values(apply_transform(img, t)), sorted_values(img));
            }
        }
    }
}

TEST(ApplyTransform, BilinearAnglesStayInRangeAndKeepConstants) {
    Rng rng(5, "test/bilinear");
    Tensor img = random_tensor(rng, {3, 16, 16}, 0.0, 1.0);
    Tensor flat({3, 16, 16}, 0.375f);
    for (std::size_t a = 1; a < kAngleCount; ++a) {
        if (a % 6 == 0) continue;
        Tensor r = apply_transform(img, {a, Flip::none});
        for (float v : r.values()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
        Tensor still = apply_transform(flat, {a, Flip::both});
        for (float v : still.values()) ASSERT_NEAR(v, 0.375f, 1e-6);
    }
    // The centre pixel of an odd-sized image is fixed by every rotation.
    Tensor odd = random_tensor(rng, {3, 9, 9}, 0.0, 1.0);
    Tensor r = apply_transform(odd, {1, Flip::none});
    EXPECT_NEAR(r[4 * 9 + 4], odd[4 * 9 + 4], 1e-6);
}

TEST(ApplyTransform, Errors) {
    EXPECT_THROW(apply_transform(Tensor({3, 4, 5}), {}), GeometryError);
    EXPECT_THROW(apply_transform(Tensor({3, 4, 4}), {24, Flip::none}), ArgumentError);
    EXPECT_THROW(apply_transform(Tensor({1, 4, 4}), {}), DimensionError);
}

TEST(AugmentedManifest, RoundTripAndDatasetView) {
    AugmentedManifest m;
    m.rows.push_back({"a_r00_none.dcim", "a", {0, Flip::none}, ClassLabel::AK});
    m.rows.push_back({"a_r07_both.dcim", "a", {7, Flip::both}, ClassLabel::AK});
    std::string text = format_augmented_manifest(m);
    EXPECT_TRUE(text.starts_with("out_path\tsource_id\tangle_index\tflip\tclass\n"));
    AugmentedManifest back = parse_augmented_manifest(text);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[1].transform, (Transform{7, Flip::both}));
    EXPECT_EQ(back.rows[1].label, ClassLabel::AK);
    EXPECT_EQ(format_augmented_manifest(back), text);
    DatasetManifest view = to_dataset_manifest(back);
    EXPECT_EQ(view.samples[1].path, "a_r07_both.dcim");
    EXPECT_NE(view.samples[0].image_id, view.samples[1].image_id);
    EXPECT_EQ(augmented_file_name("a", {7, Flip::both}), "a_r07_both.dcim");
    EXPECT_THROW(parse_augmented_manifest("bad header\n"), ParseError);
    EXPECT_THROW(parse_augmented_manifest(std::string(text) + "x\ty\t99\tnone\tM\n"), ParseError);
}

TEST(RunAugmentation, WritesPlannedFilesDeterministically) {
    fs::path root = fs::temp_directory_path() / "deepclass_aug_test";
    fs::remove_all(root);
    fs::create_directories(root / "src");
    Rng rng(6, "test/run-aug");
    DatasetManifest m;
    const ClassLabel labels[] = {ClassLabel::M, ClassLabel::N, ClassLabel::M};
    for (std::size_t i = 0; i < 3; ++i) {
        std::string id = "img" + std::to_string(i);
        save_image(random_tensor(rng, {3, 20, 24}, 0.0, 1.0), root / "src" / (id + ".ppm"));
        m.samples.push_back({id, id + ".ppm", labels[i]});
    }
    AugmentTargets t{};
    t[index_of(ClassLabel::M)] = 5;
    t[index_of(ClassLabel::N)] = 2;
    AugmentPlan plan = plan_augmentation(m, t);
    AugmentedManifest out1 = run_augmentation(m, plan, root / "src", root / "out1", 16);
    AugmentedManifest out2 = run_augmentation(m, plan, root / "src", root / "out2", 16);
    EXPECT_EQ(out1.totals()[index_of(ClassLabel::M)], 5u);
    EXPECT_EQ(out1.totals()[index_of(ClassLabel::N)], 2u);
    ASSERT_EQ(out1.rows.size(), 7u);
    EXPECT_EQ(format_augmented_manifest(out1), format_augmented_manifest(out2));
    EXPECT_EQ(out1.rows[0].source_id, "img0");
    EXPECT_EQ(out1.rows[3].source_id, "img1");
    for (const AugmentedRow& r : out1.rows) {
        std::vector<std::uint8_t> a = encode_dcim(load_image(root / "out1" / r.out_path));
        std::vector<std::uint8_t> b = encode_dcim(load_image(root / "out2" / r.out_path));
        EXPECT_EQ(a, b) << r.out_path;
    }
    // Identity rows hold exactly the resized source.
    Tensor resized = resize_bilinear(load_image(root / "src" / "img0.ppm"), 16, 16);
    EXPECT_TRUE(load_image(root / "out1" / out1.rows[0].out_path) == resized);

    DatasetManifest missing = m;
    missing.samples[2].path = "nope.ppm";
    try {
        run_augmentation(missing, plan, root / "src", root / "out3", 16);
        FAIL() << "missing source accepted";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("nope.ppm"), std::string::npos);
    }
    fs::remove_all(root);
}
