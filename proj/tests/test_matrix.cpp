#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

#include "autoroute/binary_io.hpp"
#include "autoroute/hash.hpp"
#include "autoroute/matrix.hpp"

using autoroute::Matrix;

TEST(Matrix, RowMajorLayout) {
    Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m[4], 5.0);
    EXPECT_EQ(m(1, 2), 6.0);
    EXPECT_EQ(m.row(1)[0], 4.0);
}

TEST(Matrix, FromRowsRejectsRagged) {
    EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), autoroute::ShapeError);
}

TEST(Matrix, DataConstructorChecksSize) {
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), autoroute::ShapeError);
}

TEST(Matrix, GatherRowsKeepsOrder) {
    Matrix m = Matrix::from_rows({{0}, {10}, {20}, {30}});
    std::vector<std::size_t> idx{3, 0, 3};
    Matrix g = m.gather_rows(idx);
    EXPECT_EQ(g, Matrix::from_rows({{30}, {0}, {30}}));
    std::vector<std::size_t> bad{4};
    EXPECT_THROW(m.gather_rows(bad), autoroute::ShapeError);
}

TEST(Matrix, AllFinite) {
    Matrix m(2, 2, 1.0);
    EXPECT_TRUE(m.all_finite());
    m(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(m.all_finite());
}

TEST(Matrix, Identity) {
    Matrix i = Matrix::identity(3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(i(r, c), r == c ? 1.0 : 0.0);
}

TEST(PairwiseSum, MatchesExactSmallIntegers) {
    std::vector<double> xs(1000);
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = static_cast<double>(k);
    EXPECT_EQ(autoroute::pairwise_sum(xs), 499500.0);
    EXPECT_EQ(autoroute::pairwise_sum({}), 0.0);
}

TEST(PairwiseSum, BeatsNaiveOnCancellation) {
    std::vector<double> xs(1 << 16, 0.1);
    const double exact = 0.1 * static_cast<double>(xs.size());
    double naive = 0.0;
    for (double x : xs) naive += x;
    EXPECT_LE(std::abs(autoroute::pairwise_sum(xs) - exact), std::abs(naive - exact));
}

TEST(Hash, DeriveSeedSeparatesTagsAndIndices) {
    using autoroute::derive_seed;
    EXPECT_EQ(derive_seed(1, "bandit", 0), derive_seed(1, "bandit", 0));
    EXPECT_NE(derive_seed(1, "bandit", 0), derive_seed(1, "bandit", 1));
    EXPECT_NE(derive_seed(1, "bandit", 0), derive_seed(1, "shuffle", 0));
    EXPECT_NE(derive_seed(1, "bandit", 0), derive_seed(2, "bandit", 0));
}

TEST(Hash, FnvKnownVector) {
    // Published FNV-1a 64 test vector for "a".
    EXPECT_EQ(autoroute::fnv1a(std::string_view("a")), 0xaf63dc4c8601ec8cull);
}

TEST(BinaryIo, RoundTripsAndIsLittleEndian) {
    std::stringstream ss;
    autoroute::binio::write_u64(ss, 0x0102030405060708ull);
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), 8u);
    EXPECT_EQ(bytes[0], '\x08');
    EXPECT_EQ(bytes[7], '\x01');

    std::stringstream s2;
    Matrix m = Matrix::from_rows({{1.5, -0.0}, {1e-300, 3}});
    autoroute::binio::write_header(s2, "TEST", 3);
    autoroute::binio::write_matrix(s2, m);
    autoroute::binio::write_string(s2, "hello");
    autoroute::binio::read_header(s2, "TEST", 3);
    Matrix back = autoroute::binio::read_matrix(s2);
    EXPECT_EQ(std::memcmp(back.values().data(), m.values().data(), m.values().size_bytes()), 0);
    EXPECT_EQ(autoroute::binio::read_string(s2), "hello");
}

TEST(BinaryIo, RejectsWrongMagicVersionAndTruncation) {
    std::stringstream ss;
    autoroute::binio::write_header(ss, "AAA", 1);
    std::stringstream a(ss.str()), b(ss.str()), c(ss.str().substr(0, 10));
    EXPECT_THROW(autoroute::binio::read_header(a, "BBB", 1), autoroute::binio::FormatError);
    EXPECT_THROW(autoroute::binio::read_header(b, "AAA", 2), autoroute::binio::FormatError);
    EXPECT_THROW(autoroute::binio::read_header(c, "AAA", 1), autoroute::binio::FormatError);
}
