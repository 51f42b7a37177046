/*
 * Copyright 2026 The ESN Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ESN_LAYOUT_H_
#define ESN_LAYOUT_H_

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace esn {

// Flat indexing for dense (layer, neuron, emotion) arrays, stored in that
// order, and for flat (layer, neuron) ids.
class NeuronLayout {
 public:
  NeuronLayout() = default;
  NeuronLayout(std::vector<int> widths, int num_emotions)
      : widths_(std::move(widths)), num_emotions_(num_emotions) {
    offsets_.reserve(widths_.size() + 1);
    std::size_t acc = 0;
    for (int w : widths_) {
      offsets_.push_back(acc);
      acc += static_cast<std::size_t>(w);
    }
    offsets_.push_back(acc);
  }

  int num_layers() const { return static_cast<int>(widths_.size()); }
  int num_emotions() const { return num_emotions_; }
  int width(int layer) const { return widths_[layer]; }
  const std::vector<int>& widths() const { return widths_; }
  std::size_t num_neurons() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t num_cells() const { return num_neurons() * num_emotions_; }

  std::size_t neuron(int layer, int n) const { return offsets_[layer] + n; }
  std::size_t cell(int layer, int n, int e) const {
    return neuron(layer, n) * num_emotions_ + e;
  }

  // Inverse of neuron(): flat id -> (layer, neuron).
  std::pair<int, int> Locate(std::size_t flat) const {
    int l = 0;
    while (offsets_[l + 1] <= flat) ++l;
    return {l, static_cast<int>(flat - offsets_[l])};
  }

  friend bool operator==(const NeuronLayout&, const NeuronLayout&) = default;

 private:
  std::vector<int> widths_;
  int num_emotions_ = 0;
  std::vector<std::size_t> offsets_;
};

}  // namespace esn

#endif  // ESN_LAYOUT_H_
