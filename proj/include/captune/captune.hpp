/*
   Copyright 2026 captune contributors.

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#ifndef CAPTUNE_CAPTUNE_HPP
#define CAPTUNE_CAPTUNE_HPP

#include "captune/analysis.hpp"
#include "captune/campaign.hpp"
#include "captune/errors.hpp"
#include "captune/powercap.hpp"
#include "captune/simcpu.hpp"
#include "captune/sysfs.hpp"
#include "captune/telemetry.hpp"
#include "captune/tuner.hpp"

#endif  // CAPTUNE_CAPTUNE_HPP
