#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "styx/common.hpp"
#include "styx/types.hpp"

namespace styx {

using BigInt = boost::multiprecision::cpp_int;

// Exact rational fraction of a transaction's completion acknowledgment.
// Arbitrary precision: a call tree of depth d and fan-out f produces
// denominators up to f^d. Always held in lowest terms, 0 < value <= 1.
class AckShare {
 public:
  AckShare() : num_(1), den_(1) {}

  AckShare(BigInt num, BigInt den) : num_(std::move(num)), den_(std::move(den)) {
    if (den_ <= 0) throw Error("ack share: non-positive denominator");
    if (num_ <= 0) throw Error("ack share: non-positive numerator");
    normalize();
    if (num_ > den_) throw ShareOverflowError("ack share exceeds 1");
  }

  static AckShare whole() { return AckShare(); }

  const BigInt& numerator() const { return num_; }
  const BigInt& denominator() const { return den_; }

  bool is_one() const { return num_ == den_; }

  // Exact n-way split; the n parts sum back to *this.
  std::vector<AckShare> split(std::uint64_t n) const {
    if (n == 0) throw Error("ack share: split into zero parts");
    std::vector<AckShare> parts;
    parts.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
      parts.push_back(AckShare(num_, den_ * n));
    return parts;
  }

  AckShare plus(const AckShare& other) const {
    BigInt num = num_ * other.den_ + other.num_ * den_;
    BigInt den = den_ * other.den_;
    return AckShare(std::move(num), std::move(den));
  }

  bool operator==(const AckShare& other) const {
    return num_ == other.num_ && den_ == other.den_;
  }

  std::string str() const { return num_.str() + "/" + den_.str(); }

  // Wire form: decimal strings; exact at any magnitude.
  Bytes encode() const { return num_.str() + "/" + den_.str(); }

  static AckShare parse(const Bytes& text) {
    auto slash = text.find('/');
    if (slash == Bytes::npos) throw Error("ack share: malformed encoding");
    return AckShare(BigInt(text.substr(0, slash)), BigInt(text.substr(slash + 1)));
  }

 private:
  void normalize() {
    BigInt g = boost::multiprecision::gcd(num_, den_);
    num_ /= g;
    den_ /= g;
  }

  BigInt num_;
  BigInt den_;
};

enum class CollectOutcome : std::uint8_t { Incomplete = 0, Complete = 1 };

// Owned by the worker hosting a transaction's root. Accumulates the shares
// returned by terminal calls; the call tree is complete exactly when the
// sum reaches 1.
class CallTreeTracker {
 public:
  explicit CallTreeTracker(Tid root) : root_(root) {}

  Tid root_txn() const { return root_; }

  CollectOutcome collect(const AckShare& s) {
    terminal_shares_.push_back(s);
    if (!collected_.has_value()) {
      collected_ = s;
    } else {
      BigInt num = collected_->numerator() * s.denominator() +
                   s.numerator() * collected_->denominator();
      BigInt den = collected_->denominator() * s.denominator();
      BigInt g = boost::multiprecision::gcd(num, den);
      num /= g;
      den /= g;
      if (num > den)
        throw ShareOverflowError("tracker for tid " + std::to_string(root_.value) +
                                 " collected more than 1");
      collected_ = AckShare(std::move(num), std::move(den));
    }
    return collected_->is_one() ? CollectOutcome::Complete
                                : CollectOutcome::Incomplete;
  }

  bool complete() const { return collected_.has_value() && collected_->is_one(); }

  // Sum collected so far; nullopt when nothing arrived yet.
  const std::optional<AckShare>& collected() const { return collected_; }

  // Every terminal share in arrival order.
  const std::vector<AckShare>& terminal_shares() const { return terminal_shares_; }

 private:
  Tid root_;
  std::optional<AckShare> collected_;
  std::vector<AckShare> terminal_shares_;
};

}  // namespace styx
