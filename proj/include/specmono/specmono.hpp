#pragma once

#include "specmono/core.hpp"
#include "specmono/classical.hpp"
#include "specmono/atlas.hpp"
#include "specmono/detect.hpp"
#include "specmono/monodromy.hpp"
#include "specmono/io.hpp"
#include "specmono/pipeline.hpp"
