#ifndef TGVAS_BIGINT_HPP
#define TGVAS_BIGINT_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace tgvas {

// Arbitrary-precision signed integer, sign-magnitude over base-10^9 limbs.
// Solution values, Pottier bounds and reconstruction coefficients can exceed
// machine words, so everything value-like in the solver layers goes through
// this type.
class BigInt {
  public:
    BigInt() = default;
    BigInt(long long v);

    static BigInt from_string(const std::string& s);

    bool is_zero() const { return limbs_.empty(); }
    bool negative() const { return neg_; }
    int sign() const { return is_zero() ? 0 : (neg_ ? -1 : 1); }

    BigInt operator-() const;
    BigInt operator+(const BigInt& o) const;
    BigInt operator-(const BigInt& o) const;
    BigInt operator*(const BigInt& o) const;
    BigInt& operator+=(const BigInt& o) { return *this = *this + o; }
    BigInt& operator-=(const BigInt& o) { return *this = *this - o; }
    BigInt& operator*=(const BigInt& o) { return *this = *this * o; }

    bool operator==(const BigInt& o) const { return neg_ == o.neg_ && limbs_ == o.limbs_; }
    bool operator!=(const BigInt& o) const { return !(*this == o); }
    bool operator<(const BigInt& o) const;
    bool operator>(const BigInt& o) const { return o < *this; }
    bool operator<=(const BigInt& o) const { return !(o < *this); }
    bool operator>=(const BigInt& o) const { return !(*this < o); }

    BigInt pow(unsigned long long e) const;

    // Fits in signed 64 bits?
    bool fits_i64() const;
    long long to_i64() const;  // precondition: fits_i64()

    std::string to_string() const;

  private:
    static int cmp_mag(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);
    static std::vector<uint32_t> add_mag(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);
    // precondition: a >= b
    static std::vector<uint32_t> sub_mag(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);

    void trim();

    bool neg_ = false;
    std::vector<uint32_t> limbs_;  // little-endian, base 10^9, no trailing zeros
};

inline BigInt operator+(long long a, const BigInt& b) { return BigInt(a) + b; }
inline BigInt operator*(long long a, const BigInt& b) { return BigInt(a) * b; }

}  // namespace tgvas

#endif
