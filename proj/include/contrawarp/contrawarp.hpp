// Copyright 2026 The contrawarp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "contrawarp/augment.hpp"
#include "contrawarp/common.hpp"
#include "contrawarp/config_json.hpp"
#include "contrawarp/dataset.hpp"
#include "contrawarp/eval.hpp"
#include "contrawarp/image.hpp"
#include "contrawarp/landmarks.hpp"
#include "contrawarp/net.hpp"
#include "contrawarp/parallel.hpp"
#include "contrawarp/pnm.hpp"
#include "contrawarp/rng.hpp"
#include "contrawarp/tensor.hpp"
#include "contrawarp/toy_face.hpp"
#include "contrawarp/train.hpp"
#include "contrawarp/warp.hpp"
