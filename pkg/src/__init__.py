"""KAN-SAM desk-scale RGB-T saliency package"""
__version__ = "0.1.0"
