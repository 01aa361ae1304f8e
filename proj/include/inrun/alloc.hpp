#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace inrun {

/// Counts bytes held by attribution-owned scratch buffers.
///
/// Only buffers created through TrackedBuffer are seen; model activations and
/// optimizer state belong to standard training and are not counted.
class AllocationAccountant {
 public:
  void acquire(std::size_t bytes);
  void release(std::size_t bytes);
  void reset();

  std::size_t current_bytes() const { return current_.load(); }
  std::size_t peak_bytes() const { return peak_.load(); }
  /// Largest single buffer seen since the last reset.
  std::size_t largest_buffer_bytes() const { return largest_.load(); }

 private:
  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
  std::atomic<std::size_t> largest_{0};
};

AllocationAccountant& attribution_accountant();

/// Zero-initialized double buffer whose lifetime is reported to the accountant.
class TrackedBuffer {
 public:
  explicit TrackedBuffer(std::size_t count, AllocationAccountant& acc = attribution_accountant());
  ~TrackedBuffer();
  TrackedBuffer(const TrackedBuffer&) = delete;
  TrackedBuffer& operator=(const TrackedBuffer&) = delete;
  TrackedBuffer(TrackedBuffer&& other) noexcept;
  TrackedBuffer& operator=(TrackedBuffer&&) = delete;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double> to_vector() const { return data_; }

 private:
  std::vector<double> data_;
  AllocationAccountant* acc_;
};

}  // namespace inrun
