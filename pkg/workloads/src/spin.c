/* spin workload: busy-loops forever; only ever terminates via the epoch
 * deadline. Used by interruption tests and nothing else.
 *
 * The loop body performs a volatile store so the compiler cannot eliminate
 * the (intentionally) infinite loop.
 */
#include "limes_guest.h"

static volatile u32 g_spin_counter;

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    (void)in;
    (void)in_len;
    for (;;)
        g_spin_counter++;
    ret_ok(ret, 0, 0); /* unreachable */
}
