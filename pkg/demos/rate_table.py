"""Side-by-side sin^2 error rates for streaming PCA analyses.

Prints the benchmark table for a reference spectrum and for an equal-tail
spectrum where the diffusion rate's advantage over worst-case bounds is
easiest to read off, then shows the tuned-stepsize schedule that attains it.
"""

from oja_diffusion import make_spectrum, rate_bound_sin2, stepsize_rule, table1_rows


def show(spec, n):
    b = spec.trace
    print(f"spectrum {[float(x) for x in spec.lambdas]}, "
          f"||Y||^2 <= {b:g}, n = {n:g} samples")
    rows = table1_rows(spec, b=b, n=n)
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        marker = "  <- this package" if name == "oja-diffusion" else ""
        print(f"  {name:<{width}}  {value:10.3e}{marker}")
    print()


show(make_spectrum([2.0, 1.0]), n=1e5)
show(make_spectrum([2.0, 1.0, 1.0, 1.0, 1.0, 1.0]), n=1e5)

print("tuned stepsize schedule on the reference spectrum:")
spec = make_spectrum([2.0, 1.0])
print(f"{'T':>9} {'beta(T)':>12} {'bound on E sin^2':>17}")
for t in (1e3, 1e4, 1e5, 1e6):
    print(f"{t:9.0e} {stepsize_rule(spec, t):12.3e} {rate_bound_sin2(spec, t):17.3e}")
