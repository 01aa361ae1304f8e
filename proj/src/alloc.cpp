#include "inrun/alloc.hpp"

namespace inrun {

void AllocationAccountant::acquire(std::size_t bytes) {
  const std::size_t now = current_.fetch_add(bytes) + bytes;
  std::size_t peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  std::size_t largest = largest_.load();
  while (bytes > largest && !largest_.compare_exchange_weak(largest, bytes)) {
  }
}

void AllocationAccountant::release(std::size_t bytes) { current_.fetch_sub(bytes); }

void AllocationAccountant::reset() {
  peak_.store(current_.load());
  largest_.store(0);
}

AllocationAccountant& attribution_accountant() {
  static AllocationAccountant acc;
  return acc;
}

TrackedBuffer::TrackedBuffer(std::size_t count, AllocationAccountant& acc) : data_(count, 0.0), acc_(&acc) {
  acc_->acquire(count * sizeof(double));
}

TrackedBuffer::~TrackedBuffer() {
  if (acc_) acc_->release(data_.size() * sizeof(double));
}

TrackedBuffer::TrackedBuffer(TrackedBuffer&& other) noexcept : data_(std::move(other.data_)), acc_(other.acc_) {
  other.acc_ = nullptr;
}

}  // namespace inrun
