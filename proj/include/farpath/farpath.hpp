#pragma once

#include "farpath/audit.hpp"
#include "farpath/config.hpp"
#include "farpath/error.hpp"
#include "farpath/mem_model.hpp"
#include "farpath/ref_meta.hpp"
#include "farpath/remote_store.hpp"
#include "farpath/allocator.hpp"
#include "farpath/runtime.hpp"
#include "farpath/harness/workload.hpp"
#include "farpath/harness/trace.hpp"
#include "farpath/harness/report.hpp"
#include "farpath/harness/driver.hpp"
