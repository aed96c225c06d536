#pragma once

#include "focuslime/commands.hpp"
#include "focuslime/config.hpp"
#include "focuslime/dataset.hpp"
#include "focuslime/error.hpp"
#include "focuslime/eval.hpp"
#include "focuslime/focus.hpp"
#include "focuslime/model.hpp"
#include "focuslime/perturb.hpp"
#include "focuslime/report.hpp"
#include "focuslime/segment.hpp"
#include "focuslime/surrogate.hpp"
#include "focuslime/synth.hpp"
