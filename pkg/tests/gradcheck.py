"""Central finite-difference gradient checking for tiny torch models."""

import torch


def fd_check(loss_fn, named_params, entries_per_tensor=2, h=1e-4, rtol=1e-3):
    """Compare autograd gradients against central differences.

    For each parameter tensor, the entries with the largest analytic
    gradients are probed (so the relative comparison is meaningful).
    Returns the worst relative error seen.
    """
    params = list(named_params)
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)
    worst = 0.0
    for (name, param), grad in zip(params, grads):
        if grad is None:
            continue
        flat_grad = grad.reshape(-1)
        n = min(entries_per_tensor, flat_grad.numel())
        idx = torch.argsort(flat_grad.abs(), descending=True)[:n]
        flat_param = param.data.reshape(-1)
        for i in idx.tolist():
            original = flat_param[i].item()
            flat_param[i] = original + h
            f_plus = loss_fn().item()
            flat_param[i] = original - h
            f_minus = loss_fn().item()
            flat_param[i] = original
            fd = (f_plus - f_minus) / (2 * h)
            analytic = flat_grad[i].item()
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-5)
            assert rel <= rtol, (f"{name}[{i}]: analytic {analytic:.3e} vs fd {fd:.3e} "
                                 f"(rel {rel:.2e} > {rtol})")
            worst = max(worst, rel)
    return worst
