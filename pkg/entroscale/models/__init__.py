from entroscale.models.denoiser import DenoiserArch, EntropyDenoiser

__all__ = ["DenoiserArch", "EntropyDenoiser"]
