/* test guest: traps immediately (unreachable instruction). */
#include "limes_guest.h"

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    (void)in;
    (void)in_len;
    (void)ret;
    __builtin_trap();
}
