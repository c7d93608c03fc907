/* no-op workload: returns the input bytes unchanged. */
#include "limes_guest.h"

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    u8 *copy = guest_alloc(in_len);
    if (!copy && in_len > 0) {
        ret_err(ret, "out of memory");
        return;
    }
    gmemcpy(copy, in, in_len);
    ret_ok(ret, copy, in_len);
}
