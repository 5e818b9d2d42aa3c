"""Dataset curation: image IO, perceptual hashing, de-duplication,
augmentation, manifests and the synthetic grating corpus."""
