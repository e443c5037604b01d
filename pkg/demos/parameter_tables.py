"""Compare analytic parameter counts against the published model-size tables.

The RS rows assume a 3 x 256 codebook vocabulary with four disambiguation
digits and 20 history items of four tokens each.
"""

from grscale.models import SasrecConfig, Seq2SeqConfig, sasrec_param_count, tiger_param_count

rs_rows = [(336_000, 1, 64, 3, 512), (778_000, 2, 64, 3, 512), (1_900_000, 5, 64, 3, 512),
           (3_300_000, 9, 64, 3, 512), (6_700_000, 3, 128, 6, 1024), (13_000_000, 4, 128, 6, 1024),
           (21_000_000, 7, 128, 6, 1024), (43_000_000, 8, 192, 9, 1536), (88_000_000, 9, 320, 15, 2560),
           (192_000_000, 20, 384, 18, 3072)]
print("encoder-decoder rows")
for target, layers, d, heads, ff in rs_rows:
    n = tiger_param_count(Seq2SeqConfig(layers=layers, d_model=d, heads=heads, d_kv=64, d_ff=ff, vocab_size=775,
                                        max_positions=80, sid_length=4))
    print(f"  {target:>12,}  ours {n:>12,}  {100 * (n - target) / target:+6.1f}%")

print("SASRec rows (non-embedding)")
for target, layers, d, heads in [(98_304, 2, 64, 2), (786_432, 4, 128, 4), (1_572_864, 8, 128, 4),
                                 (6_291_456, 8, 256, 8), (25_165_824, 8, 512, 8), (75_497_472, 24, 512, 8)]:
    n = sasrec_param_count(SasrecConfig(layers=layers, d_model=d, heads=heads, item_count=1))
    print(f"  {target:>12,}  ours {n:>12,}  {100 * (n - target) / target:+6.1f}%")
